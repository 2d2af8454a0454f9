// Command-line surface for the convrec recommender. Links the C API only.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "convrec/convrec.h"

namespace {

struct GlobalOpts {
  std::string config;
  std::string seed;
  bool force = false;
  bool trace = false;
  std::vector<std::string> sets;
};

std::vector<const char*> make_overrides(const GlobalOpts& g,
                                        std::vector<std::string>& storage) {
  storage = g.sets;
  if (!g.seed.empty()) storage.push_back("run.seed=" + g.seed);
  if (g.force) storage.push_back("run.force=true");
  std::vector<const char*> ptrs;
  for (const auto& s : storage) ptrs.push_back(s.c_str());
  return ptrs;
}

int report_error(int code, char* err) {
  if (err) {
    std::cerr << "error: " << err << "\n";
    convrec_free(err);
  }
  return code;
}

void print_trace_tables(const std::string& trace_json) {
  auto j = nlohmann::json::parse(trace_json, nullptr, false);
  if (j.is_discarded()) return;
  for (const auto& ev : j.value("rec_events", nlohmann::json::array())) {
    std::printf("  [REC] at step %d -> item %d\n", ev.value("step", 0),
                ev.value("chosen", 0));
    std::printf("  %-8s %-12s %-12s\n", "item", "P(select)", "R(rank)");
    for (const auto& c : ev.value("candidates", nlohmann::json::array()))
      std::printf("  %-8d %-12.4f %-12.4f\n", c.value("id", 0),
                  c.value("p", 0.0), c.value("r", 0.0));
  }
  if (j.value("unfilled_placeholders", 0) > 0)
    std::printf("  warning: %d unfilled placeholder(s)\n",
                j["unfilled_placeholders"].get<int>());
}

int run_chat(const GlobalOpts& g) {
  std::vector<std::string> storage;
  auto ptrs = make_overrides(g, storage);
  convrec_chat* chat = nullptr;
  char* err = nullptr;
  int rc = convrec_chat_open(g.config.empty() ? nullptr : g.config.c_str(),
                             ptrs.data(), ptrs.size(), &chat, &err);
  if (rc != CONVREC_OK) return report_error(rc, err);

  std::cout << "convrec chat — type a message, /reset to clear, /quit to exit\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "/quit") break;
    if (line == "/reset") {
      convrec_chat_reset(chat);
      std::cout << "(context cleared)\n";
      continue;
    }
    if (line.empty()) continue;
    char* reply = nullptr;
    char* trace = nullptr;
    rc = convrec_chat_turn(chat, line.c_str(), &reply, &trace, &err);
    if (rc != CONVREC_OK) {
      if (err) {
        std::cerr << "error: " << err << "\n";
        convrec_free(err);
        err = nullptr;
      }
      continue;  // the session survives bad input
    }
    std::cout << reply << "\n";
    if (g.trace && trace) print_trace_tables(trace);
    convrec_free(reply);
    convrec_free(trace);
  }
  convrec_chat_close(chat);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convrec — metadata-driven conversational recommender"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config, "INI config file");
  app.add_option("--seed", g.seed, "override run.seed");
  app.add_flag("--force", g.force, "overwrite existing outputs");
  app.add_flag("--trace", g.trace, "print candidate score tables in chat");
  app.add_option("--set", g.sets, "override a config key (section.key=value)")
      ->take_all();

  std::string spec_path, out_dir, mode;
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  gen->add_option("spec", spec_path, "synthetic spec file")->required();
  gen->add_option("out", out_dir, "output directory")->required();

  app.add_subcommand("train", "train a model from the corpus");
  app.add_subcommand("index", "build the nearest-neighbor index");
  app.add_subcommand("eval", "run the evaluation suite");
  app.add_subcommand("chat", "interactive recommendation session");
  auto* analyze = app.add_subcommand("analyze", "cluster | ablation | stats");
  analyze->add_option("--mode", mode, "analysis mode")->required();

  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> storage;
  auto ptrs = make_overrides(g, storage);
  const char* cfg = g.config.empty() ? nullptr : g.config.c_str();
  char* err = nullptr;
  char* report = nullptr;
  int rc = CONVREC_OK;

  if (gen->parsed()) {
    rc = convrec_gen_corpus(spec_path.c_str(), out_dir.c_str(), g.force ? 1 : 0,
                            &err);
  } else if (app.got_subcommand("train")) {
    rc = convrec_train(cfg, ptrs.data(), ptrs.size(), &err);
  } else if (app.got_subcommand("index")) {
    rc = convrec_build_index(cfg, ptrs.data(), ptrs.size(), &err);
  } else if (app.got_subcommand("eval")) {
    rc = convrec_eval(cfg, ptrs.data(), ptrs.size(), &report, &err);
  } else if (app.got_subcommand("analyze")) {
    rc = convrec_analyze(cfg, mode.c_str(), ptrs.data(), ptrs.size(), &report,
                         &err);
  } else if (app.got_subcommand("chat")) {
    return run_chat(g);
  }

  if (rc != CONVREC_OK) return report_error(rc, err);
  if (report) {
    std::cout << report << "\n";
    convrec_free(report);
  }
  return 0;
}
