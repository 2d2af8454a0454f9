#include "convrec/convrec.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "pipeline.hpp"

using namespace convrec;

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_err(char** err, const std::string& msg) {
  if (err) *err = dup_string(msg);
}

std::vector<std::string> collect(const char* const* overrides, size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i)
    if (overrides && overrides[i]) out.emplace_back(overrides[i]);
  return out;
}

RunConfig load_cfg(const char* config_path, const char* const* overrides,
                   size_t n) {
  return RunConfig::load(config_path ? config_path : "",
                         collect(overrides, n));
}

template <typename Fn>
int guarded(char** err, Fn&& fn) {
  try {
    fn();
    return CONVREC_OK;
  } catch (const ConfigError& e) {
    set_err(err, e.what());
    return CONVREC_ERR_CONFIG;
  } catch (const DataError& e) {
    set_err(err, e.what());
    return CONVREC_ERR_DATA;
  } catch (const std::exception& e) {
    set_err(err, e.what());
    return CONVREC_ERR_RUNTIME;
  }
}

}  // namespace

struct convrec_chat {
  ChatSession session;
};

extern "C" {

const char* convrec_version(void) { return "0.1.0"; }

void convrec_free(char* s) { std::free(s); }

int convrec_gen_corpus(const char* spec_path, const char* out_dir, int force,
                       char** err) {
  if (!spec_path || !out_dir) {
    set_err(err, "gen-corpus: spec path and output directory are required");
    return CONVREC_ERR_CONFIG;
  }
  return guarded(err, [&] { cmd_gen_corpus(spec_path, out_dir, force != 0); });
}

int convrec_train(const char* config_path, const char* const* overrides,
                  size_t n_overrides, char** err) {
  return guarded(err, [&] {
    cmd_train(load_cfg(config_path, overrides, n_overrides));
  });
}

int convrec_build_index(const char* config_path, const char* const* overrides,
                        size_t n_overrides, char** err) {
  return guarded(err, [&] {
    cmd_index(load_cfg(config_path, overrides, n_overrides));
  });
}

int convrec_eval(const char* config_path, const char* const* overrides,
                 size_t n_overrides, char** report_json, char** err) {
  return guarded(err, [&] {
    nlohmann::json report =
        cmd_eval(load_cfg(config_path, overrides, n_overrides));
    if (report_json) *report_json = dup_string(report.dump(2));
  });
}

int convrec_analyze(const char* config_path, const char* mode,
                    const char* const* overrides, size_t n_overrides,
                    char** report_json, char** err) {
  if (!mode) {
    set_err(err, "analyze: mode is required (cluster | ablation | stats)");
    return CONVREC_ERR_CONFIG;
  }
  return guarded(err, [&] {
    nlohmann::json report =
        cmd_analyze(load_cfg(config_path, overrides, n_overrides), mode);
    if (report_json) *report_json = dup_string(report.dump(2));
  });
}

int convrec_chat_open(const char* config_path, const char* const* overrides,
                      size_t n_overrides, convrec_chat** out, char** err) {
  if (!out) {
    set_err(err, "chat: output handle is required");
    return CONVREC_ERR_CONFIG;
  }
  *out = nullptr;
  return guarded(err, [&] {
    RunConfig cfg = load_cfg(config_path, overrides, n_overrides);
    *out = new convrec_chat{ChatSession(cfg)};
  });
}

int convrec_chat_turn(convrec_chat* chat, const char* user_text, char** reply,
                      char** trace_json, char** err) {
  if (!chat || !user_text) {
    set_err(err, "chat: session handle and user text are required");
    return CONVREC_ERR_CONFIG;
  }
  return guarded(err, [&] {
    ChatSession::Reply r = chat->session.turn(user_text);
    if (reply) *reply = dup_string(r.text);
    if (trace_json) *trace_json = dup_string(r.trace.dump());
  });
}

int convrec_chat_reset(convrec_chat* chat) {
  if (!chat) return CONVREC_ERR_CONFIG;
  chat->session.reset();
  return CONVREC_OK;
}

void convrec_chat_close(convrec_chat* chat) { delete chat; }

}  // extern "C"
