#include "procuresim/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace procuresim::llm {

using nlohmann::json;

namespace {

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

MockTransport::MockTransport(const std::string& script_json) {
  json j;
  try {
    j = json::parse(script_json);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("mock script parse error: ") + e.what());
  }
  if (j.contains("default")) {
    default_text_ = j["default"].get<std::string>();
    has_default_ = true;
  }
  if (j.contains("firms")) {
    for (auto it = j["firms"].begin(); it != j["firms"].end(); ++it) {
      FirmScript fs;
      const json& jf = it.value();
      if (jf.contains("default")) {
        fs.default_text = jf["default"].get<std::string>();
        fs.has_default = true;
      }
      if (jf.contains("steps")) {
        for (auto st = jf["steps"].begin(); st != jf["steps"].end(); ++st)
          fs.steps.emplace_back(std::stoi(st.key()), st.value().get<std::string>());
        std::sort(fs.steps.begin(), fs.steps.end());
      }
      firms_.emplace_back(it.key(), std::move(fs));
    }
  }
}

MockTransport MockTransport::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TransportError("cannot open mock script '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return MockTransport(buf.str());
}

std::string MockTransport::lookup(const std::string& firm_id, int step) const {
  const FirmScript* wildcard = nullptr;
  for (const auto& [id, fs] : firms_) {
    if (id == "*") {
      wildcard = &fs;
      continue;
    }
    if (id != firm_id) continue;
    for (const auto& [s, text] : fs.steps)
      if (s == step) return text;
    if (fs.has_default) return fs.default_text;
  }
  if (wildcard != nullptr) {
    for (const auto& [s, text] : wildcard->steps)
      if (s == step) return text;
    if (wildcard->has_default) return wildcard->default_text;
  }
  if (has_default_) return default_text_;
  throw TransportError("mock script has no response for firm '" + firm_id +
                       "' step " + std::to_string(step));
}

std::string MockTransport::complete(const std::string&, const std::string&,
                                    double, int, const CallContext& ctx) {
  return lookup(ctx.firm_id, ctx.step);
}

HttpTransport::HttpTransport(TransportConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty())
    throw TransportError("http transport requires an endpoint");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key != nullptr) api_key_ = key;
}

std::string HttpTransport::complete(const std::string& system_prompt,
                                    const std::string& user_prompt,
                                    double temperature, int max_tokens,
                                    const CallContext&) {
  json body;
  body["model"] = config_.model;
  body["messages"] = json::array({
      json{{"role", "system"}, {"content", system_prompt}},
      json{{"role", "user"}, {"content", user_prompt}},
  });
  body["temperature"] = temperature;
  body["max_tokens"] = max_tokens;
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(250 * attempt));
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError("chat endpoint returned status " +
                           std::to_string(res->status) + ": " + res->body);
    try {
      json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(std::string("malformed chat response: ") + e.what());
    }
  }
  throw TransportError("chat endpoint unreachable after " +
                       std::to_string(config_.max_retries + 1) +
                       " attempts: " + last_error);
}

std::unique_ptr<ChatTransport> make_transport(const TransportConfig& config) {
  if (config.kind == "mock") {
    if (config.script_path.empty())
      throw TransportError("mock transport requires a script path");
    return std::make_unique<MockTransport>(
        MockTransport::from_file(config.script_path));
  }
  if (config.kind == "http") return std::make_unique<HttpTransport>(config);
  throw TransportError("unknown transport kind '" + config.kind + "'");
}

void LlmMemory::record(const MemoryEntry& e) {
  entries_.push_back(e);
  while (static_cast<int>(entries_.size()) > window_) entries_.pop_front();
}

std::pair<std::string, std::string> build_prompt(const PromptContext& ctx) {
  const FirmConfig& firm = *ctx.firm;
  const DrugScenario& s = *ctx.scenario;
  const double cost = firm.cost.value();

  std::string system_prompt =
      "You are the pricing strategist of pharmaceutical firm " + firm.firm_id +
      " competing in a centralized volume-based drug procurement auction for " +
      s.drug_id +
      ". Each round every firm submits one sealed bid; the " +
      std::to_string(s.x) +
      " lowest bids win the guaranteed procurement volume. Your bid must stay "
      "within the bounds " +
      fmt(cost, 4) + " <= bid <= " + fmt(s.p_max, 4) +
      " (your unit cost and the maximum valid bidding price). Respond with a "
      "single JSON object of the form {\"reasoning\": \"<text>\", "
      "\"bid_price\": <float>} and nothing else.";

  std::ostringstream user;
  user << "You are bidding for firm " << firm.firm_id << " in round "
       << ctx.step << " of " << ctx.horizon << ".\n";

  user << "\nFirm characteristics:\n"
       << "- unit production cost: " << fmt(cost, 4) << " CNY\n"
       << "- firm type: " << to_string(firm.firm_type)
       << (firm.firm_type == FirmType::A ? " (originator)" : " (generic)")
       << "\n"
       << "- in-house raw material production: "
       << (firm.has_raw_material ? "yes" : "no") << "\n"
       << "- residual market share: " << fmt(firm.beta, 4) << "\n"
       << "- price linkage coefficient: " << fmt(firm.omega, 2) << "\n";

  user << "\nProcurement mechanism:\n"
       << "- maximum valid bidding price: " << fmt(s.p_max, 4) << " CNY\n"
       << "- agreed procurement ratio: " << fmt(s.rho, 2) << "\n"
       << "- agreed procurement volume: " << fmt(s.q0, 2)
       << " (1e4 dosage units)\n"
       << "- number of winning bidders: " << s.x << " of "
       << s.firms.size() << " competing firms\n";

  user << "\nRecent bidding history:\n";
  if (ctx.memory == nullptr || ctx.memory->entries().empty()) {
    user << "- no bidding history yet; this is your opening bid\n";
  } else {
    const auto& entries = ctx.memory->entries();
    double prev_profit = 0.0;
    bool have_prev = false;
    for (const auto& e : entries) {
      user << "- round " << e.step << ": bid " << fmt(e.bid, 4) << ", rank "
           << e.rank << "/" << s.firms.size() << ", "
           << (e.won ? "selected" : "not selected") << ", profit "
           << fmt(e.profit, 2);
      if (have_prev) {
        double delta = e.profit - prev_profit;
        user << " (" << (delta >= 0 ? "+" : "") << fmt(delta, 2)
             << " vs previous round)";
      }
      user << "\n";
      prev_profit = e.profit;
      have_prev = true;
    }
    const auto& last = entries.back();
    user << "\nCurrent market state: your last bid ranked " << last.rank
         << " of " << s.firms.size() << " and you were "
         << (last.won ? "among the selected winners"
                      : "not selected for the guaranteed volume")
         << ".\n";
  }

  if (!ctx.last_reflection.empty())
    user << "\nYour last strategic reflection: " << ctx.last_reflection << "\n";

  if (is_reflection_step(ctx.step)) {
    user << "\nStrategy reflection: you have completed " << (ctx.step - 1)
         << " rounds with cumulative profit " << fmt(ctx.cumulative_profit, 2)
         << " and " << ctx.wins
         << " winning rounds. Analyze your cumulative performance and "
            "reconsider your bidding strategy before deciding this round's "
            "bid.\n";
  }

  user << "\nDecide your bid for this round and reply with the JSON object "
          "only.";
  return {system_prompt, user.str()};
}

std::optional<ParsedResponse> extract_bid_json(const std::string& text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{') continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          json candidate = json::parse(text.substr(start, i - start + 1),
                                       nullptr, false);
          if (!candidate.is_discarded() && candidate.is_object() &&
              candidate.contains("reasoning") &&
              candidate.contains("bid_price") &&
              candidate["bid_price"].is_number()) {
            ParsedResponse out;
            out.reasoning = candidate["reasoning"].is_string()
                                ? candidate["reasoning"].get<std::string>()
                                : candidate["reasoning"].dump();
            out.bid_price = candidate["bid_price"].get<double>();
            return out;
          }
          break;  // balanced but unusable; scan from the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

ConstraintStats constraint_stats(const std::vector<DialogueRecord>& records) {
  ConstraintStats stats;
  for (const auto& r : records) {
    ++stats.dialogue_records;
    if (r.raw_bid.has_value()) {
      if (r.below_cost) ++stats.below_cost;
      if (r.above_pmax) ++stats.above_pmax;
    }
    if (r.fallback) ++stats.fallbacks;
  }
  if (stats.dialogue_records > 0) {
    auto pct = [&](long c) {
      return std::round(10000.0 * static_cast<double>(c) /
                        static_cast<double>(stats.dialogue_records)) /
             100.0;
    };
    stats.pct_below = pct(stats.below_cost);
    stats.pct_above = pct(stats.above_pmax);
  }
  return stats;
}

std::string transcripts_to_json(const std::vector<DialogueRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    json jr;
    jr["episode"] = r.episode;
    jr["step"] = r.step;
    jr["firm_id"] = r.firm_id;
    jr["attempt"] = r.attempt;
    jr["system"] = r.system_prompt;
    jr["user"] = r.user_prompt;
    jr["response"] = r.response;
    jr["parsed"] = r.parsed;
    if (r.raw_bid.has_value()) jr["raw_bid"] = *r.raw_bid;
    if (r.bid_price.has_value()) jr["bid_price"] = *r.bid_price;
    jr["below_cost"] = r.below_cost;
    jr["above_pmax"] = r.above_pmax;
    jr["fallback"] = r.fallback;
    out.push_back(std::move(jr));
  }
  return out.dump(2) + "\n";
}

std::vector<DialogueRecord> transcripts_from_json(const std::string& text) {
  json in = json::parse(text);
  std::vector<DialogueRecord> out;
  for (const auto& jr : in) {
    DialogueRecord r;
    r.episode = jr.at("episode").get<int>();
    r.step = jr.at("step").get<int>();
    r.firm_id = jr.at("firm_id").get<std::string>();
    r.attempt = jr.at("attempt").get<int>();
    r.system_prompt = jr.at("system").get<std::string>();
    r.user_prompt = jr.at("user").get<std::string>();
    r.response = jr.at("response").get<std::string>();
    r.parsed = jr.at("parsed").get<bool>();
    if (jr.contains("raw_bid")) r.raw_bid = jr["raw_bid"].get<double>();
    if (jr.contains("bid_price")) r.bid_price = jr["bid_price"].get<double>();
    r.below_cost = jr.at("below_cost").get<bool>();
    r.above_pmax = jr.at("above_pmax").get<bool>();
    r.fallback = jr.at("fallback").get<bool>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace procuresim::llm
