#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "procuresim/scenario.hpp"

namespace procuresim::llm {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Identifies the requesting firm/step so scripted transports can key their
// responses; live transports ignore it.
struct CallContext {
  std::string firm_id;
  int step = 0;
  int attempt = 1;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  // Returns the assistant text. Throws TransportError once the transport's
  // own retry budget is exhausted.
  virtual std::string complete(const std::string& system_prompt,
                               const std::string& user_prompt,
                               double temperature, int max_tokens,
                               const CallContext& ctx) = 0;
};

struct TransportConfig {
  std::string kind = "mock";  // "mock" | "http"
  std::string endpoint;       // http base, e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model = "qwen3-235b-a22b-instruct";
  std::string api_key_env = "PROCURESIM_API_KEY";
  double temperature = 0.7;
  int max_tokens = 512;
  int timeout_seconds = 120;
  int max_retries = 2;
  std::string script_path;  // mock transports only
};

// Deterministic scripted transport for tests and offline runs. Responses are
// keyed by (firm, step) with a "*" firm wildcard and per-firm/global
// defaults. Lookup is read-only, so concurrent calls are safe.
class MockTransport : public ChatTransport {
 public:
  explicit MockTransport(const std::string& script_json);
  static MockTransport from_file(const std::string& path);

  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt, double temperature,
                       int max_tokens, const CallContext& ctx) override;

 private:
  struct FirmScript {
    std::string default_text;
    bool has_default = false;
    std::vector<std::pair<int, std::string>> steps;  // sorted by step
  };
  std::string lookup(const std::string& firm_id, int step) const;
  std::vector<std::pair<std::string, FirmScript>> firms_;
  std::string default_text_;
  bool has_default_ = false;
};

// OpenAI-style chat-completions client over cpp-httplib. Auth comes from the
// environment variable named in the config, never from files.
class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(TransportConfig config);
  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt, double temperature,
                       int max_tokens, const CallContext& ctx) override;

 private:
  TransportConfig config_;
  std::string api_key_;
};

std::unique_ptr<ChatTransport> make_transport(const TransportConfig& config);

// One decision-outcome tuple for the sliding memory window.
struct MemoryEntry {
  int step = 0;
  double bid = 0.0;
  double profit = 0.0;
  int rank = 0;
  bool won = false;
};

// Sliding window over the most recent decision-outcome tuples (window 3).
class LlmMemory {
 public:
  explicit LlmMemory(int window = 3) : window_(window) {}
  void record(const MemoryEntry& e);
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }
  int window() const { return window_; }

 private:
  int window_;
  std::deque<MemoryEntry> entries_;
};

inline constexpr int kReflectionPeriod = 5;
inline bool is_reflection_step(int step) {
  return step > 0 && step % kReflectionPeriod == 0;
}

struct PromptContext {
  const FirmConfig* firm = nullptr;
  const DrugScenario* scenario = nullptr;
  int step = 1;  // 1-based decision step about to be taken
  int horizon = 1;
  const LlmMemory* memory = nullptr;
  double cumulative_profit = 0.0;
  int wins = 0;
  std::string last_reflection;  // reasoning captured at the last reflection step
};

// Builds (system, user) prompts. The user prompt carries, in order: role,
// firm characteristics, mechanism parameters, memory tuples annotated with
// profit deltas, the current rank/selection status, and on reflection steps
// a strategy-reconsideration block.
std::pair<std::string, std::string> build_prompt(const PromptContext& ctx);

struct ParsedResponse {
  std::string reasoning;
  double bid_price = 0.0;
};

// Extracts the first well-formed JSON object carrying both "reasoning" and a
// numeric "bid_price", even when wrapped in prose.
std::optional<ParsedResponse> extract_bid_json(const std::string& text);

// One transport exchange. Retries are their own records; raw_bid is the
// pre-clamp price used for constraint accounting.
struct DialogueRecord {
  int episode = 1;
  int step = 0;
  std::string firm_id;
  int attempt = 1;
  std::string system_prompt;
  std::string user_prompt;
  std::string response;
  bool parsed = false;
  std::optional<double> raw_bid;
  std::optional<double> bid_price;  // clamped bid actually played
  bool below_cost = false;
  bool above_pmax = false;
  bool fallback = false;
};

struct ConstraintStats {
  long dialogue_records = 0;
  long below_cost = 0;
  long above_pmax = 0;
  long fallbacks = 0;
  double pct_below = 0.0;  // rounded to 2 decimals
  double pct_above = 0.0;
};

ConstraintStats constraint_stats(const std::vector<DialogueRecord>& records);

std::string transcripts_to_json(const std::vector<DialogueRecord>& records);
std::vector<DialogueRecord> transcripts_from_json(const std::string& text);

}  // namespace procuresim::llm
