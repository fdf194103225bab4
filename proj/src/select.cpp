#include "iavla/select.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "iavla/errors.hpp"

namespace iavla {
namespace {

std::string describe_tags(const std::vector<int>& tags) {
  std::vector<int> sorted = tags;
  std::sort(sorted.begin(), sorted.end());
  bool contiguous = !sorted.empty();
  for (std::size_t k = 1; k < sorted.size(); ++k) contiguous &= sorted[k] == sorted[k - 1] + 1;
  std::ostringstream os;
  if (contiguous && sorted.size() > 1) {
    os << sorted.front() << " to " << sorted.back();
    return os.str();
  }
  for (std::size_t k = 0; k < sorted.size(); ++k) os << (k ? ", " : "") << sorted[k];
  return os.str();
}

std::vector<int> integers_in(const std::string& s) {
  static const std::regex number(R"(-?\d+)");
  std::vector<int> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    try {
      out.push_back(std::stoi(it->str()));
    } catch (const std::out_of_range&) {
      out.push_back(-1);  // never a valid tag
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string answer_line(const std::vector<int>& tags) {
  std::ostringstream os;
  os << "FINAL: [";
  for (std::size_t k = 0; k < tags.size(); ++k) os << (k ? ", " : "") << tags[k];
  os << "]";
  return os.str();
}

}  // namespace

std::string_view to_string(SelectionStatus s) {
  switch (s) {
    case SelectionStatus::Ok:
      return "ok";
    case SelectionStatus::Invalid:
      return "invalid";
    case SelectionStatus::Timeout:
      return "timeout";
  }
  return "invalid";
}

SelectionStatus selection_status_from_string(std::string_view s) {
  if (s == "ok") return SelectionStatus::Ok;
  if (s == "invalid") return SelectionStatus::Invalid;
  if (s == "timeout") return SelectionStatus::Timeout;
  throw ConfigError("unknown selection status '" + std::string(s) + "'");
}

nlohmann::json to_json(const SelectionResult& r) {
  return {{"chosen_tags", r.chosen_tags},
          {"raw_reply", r.raw_reply},
          {"status", to_string(r.status)},
          {"attempts", r.attempts}};
}

SelectionResult selection_from_json(const nlohmann::json& j) {
  SelectionResult r;
  r.chosen_tags = j.at("chosen_tags").get<std::vector<int>>();
  r.raw_reply = j.value("raw_reply", "");
  r.status = selection_status_from_string(j.at("status").get<std::string>());
  r.attempts = j.value("attempts", 0);
  return r;
}

std::string build_prompt(const std::string& instruction, const std::vector<int>& valid_tags,
                         TaskSetting setting) {
  std::ostringstream os;
  os << "The image shows a robot workspace. Candidate objects are outlined and labelled "
        "with numeric tags.\n";
  os << "Instruction: \"" << instruction << "\"\n";
  os << "Valid tags: " << describe_tags(valid_tags) << "\n";
  switch (setting) {
    case TaskSetting::Blocks:
      os << "Choose the tag of the block the instruction refers to.\n";
      break;
    case TaskSetting::Kitchen:
      os << "Choose two tags: first the vegetable, then the pot the instruction refers to.\n";
      break;
    case TaskSetting::Drawers:
      os << "Choose the tag of the drawer the instruction refers to.\n";
      break;
  }
  os << "You may reason briefly. End with exactly one line of the form\n";
  os << "FINAL: [n, ...]\n";
  return os.str();
}

SelectionResult parse_selection(const std::string& reply, const std::vector<int>& valid_tags,
                                int min_tags) {
  SelectionResult r;
  r.raw_reply = reply;
  r.status = SelectionStatus::Invalid;

  std::vector<int> found;
  std::istringstream lines(reply);
  std::string line;
  std::optional<std::string> final_line;
  while (std::getline(lines, line)) {
    const auto t = trim(line);
    const auto pos = t.find("FINAL:");
    if (pos != std::string::npos) final_line = t.substr(pos + 6);
  }
  if (final_line) found = integers_in(*final_line);
  if (found.empty()) {
    static const std::regex bracket(R"(\[\s*-?\d+(?:\s*,\s*-?\d+)*\s*\])");
    std::string last;
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), bracket);
         it != std::sregex_iterator(); ++it) {
      last = it->str();
    }
    found = integers_in(last);
  }

  std::vector<int> tags;
  for (int t : found)
    if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
  r.chosen_tags = tags;
  if (tags.empty()) return r;
  for (int t : tags)
    if (std::find(valid_tags.begin(), valid_tags.end(), t) == valid_tags.end()) return r;
  if (static_cast<int>(tags.size()) < min_tags) return r;
  r.status = SelectionStatus::Ok;
  return r;
}

void MockVlmConfig::validate() const {
  for (double p : {wrong_tag_probability, refuse_probability})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mock VLM probabilities must lie in [0, 1]");
  if (scripted_refusals < 0) throw ConfigError("scripted_refusals must be non-negative");
}

nlohmann::json to_json(const MockVlmConfig& c) {
  return {{"wrong_tag_probability", c.wrong_tag_probability},
          {"refuse_probability", c.refuse_probability},
          {"rng_seed", c.rng_seed},
          {"scripted_refusals", c.scripted_refusals}};
}

MockVlmConfig mock_vlm_config_from_json(const nlohmann::json& j) {
  MockVlmConfig c;
  try {
    c.wrong_tag_probability = j.value("wrong_tag_probability", c.wrong_tag_probability);
    c.refuse_probability = j.value("refuse_probability", c.refuse_probability);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.scripted_refusals = j.value("scripted_refusals", c.scripted_refusals);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mock VLM config: ") + e.what());
  }
  c.validate();
  return c;
}

MockVlm::MockVlm(MockVlmConfig config) : config_(config), rng_(config.rng_seed) {
  config_.validate();
}

int MockVlm::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string MockVlm::complete(const VlmRequest& request) {
  std::lock_guard lock(mu_);
  const int call = calls_++;
  const double r_refuse = rng_.real();
  const double r_wrong = rng_.real();
  const std::uint64_t r_pick = rng_.next();

  if (call < config_.scripted_refusals || r_refuse < config_.refuse_probability) {
    return "I am not able to tell which of the tagged objects the instruction means.";
  }

  const int arity = selection_arity(request.setting);
  std::vector<int> answer;
  std::ostringstream why;
  if (!request.hint) {
    for (int t : request.valid_tags) {
      if (static_cast<int>(answer.size()) == arity) break;
      answer.push_back(t);
    }
    why << "Taking the first candidate tags.";
  } else {
    const auto& hint = *request.hint;
    const bool wrong = r_wrong < config_.wrong_tag_probability;
    // A wrong answer swaps one role (drawn) for a decoy; missing correct tags
    // are always replaced by a decoy.
    const std::size_t roles = hint.correct.size();
    const std::size_t wrong_role = roles ? r_pick % roles : 0;
    for (std::size_t role = 0; role < roles; ++role) {
      const auto& decoys = role < hint.decoys.size() ? hint.decoys[role] : std::vector<int>{};
      std::optional<int> pick = hint.correct[role];
      if ((!pick || (wrong && role == wrong_role)) && !decoys.empty()) {
        pick = decoys[(r_pick / std::max<std::size_t>(roles, 1)) % decoys.size()];
      }
      if (!pick) {
        for (int t : request.valid_tags) {
          if (std::find(answer.begin(), answer.end(), t) == answer.end()) {
            pick = t;
            break;
          }
        }
      }
      if (pick) answer.push_back(*pick);
    }
    why << "Comparing the tagged objects against the instruction.";
  }
  for (std::size_t k = 0; k < answer.size(); ++k) {
    why << " Tag " << answer[k] << (k + 1 == answer.size() ? " fits." : " fits;");
  }
  return why.str() + "\n" + answer_line(answer);
}

HttpVlmClient::HttpVlmClient(std::string url, int timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {}

std::string HttpVlmClient::complete(const VlmRequest& request) {
  if (request.image == nullptr) throw BackendError("VLM request without an image");
  httplib::Client cli(url_);
  const auto secs = timeout_ms_ / 1000;
  const auto usecs = (timeout_ms_ % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  const nlohmann::json body = {{"image_png_b64", base64_encode(encode_png(*request.image))},
                               {"prompt", request.prompt}};
  auto res = cli.Post("/v1/select", body.dump(), "application/json");
  if (!res) throw BackendError("VLM request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw BackendError("VLM endpoint answered HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body).at("reply").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed VLM reply: ") + e.what());
  }
}

SelectionResult select(const RgbImage& annotated, const std::string& instruction,
                       const std::vector<int>& valid_tags, TaskSetting setting,
                       VlmClient& client, int retries, const std::optional<OracleHint>& hint) {
  VlmRequest req;
  req.image = &annotated;
  req.prompt = build_prompt(instruction, valid_tags, setting);
  req.valid_tags = valid_tags;
  req.setting = setting;
  req.hint = hint;

  SelectionResult last;
  const int max_attempts = std::max(0, retries) + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    try {
      last = parse_selection(client.complete(req), valid_tags, selection_arity(setting));
    } catch (const BackendError& e) {
      last = SelectionResult{};
      last.raw_reply = e.what();
      last.status = SelectionStatus::Timeout;
    }
    last.attempts = attempt;
    if (last.status == SelectionStatus::Ok) return last;
    spdlog::debug("selection attempt {} of {}: {}", attempt, max_attempts, to_string(last.status));
  }
  return last;
}

}  // namespace iavla
