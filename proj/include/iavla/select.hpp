#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/image.hpp"
#include "iavla/setting.hpp"
#include "iavla/seeding.hpp"

namespace iavla {

enum class SelectionStatus { Ok, Invalid, Timeout };

std::string_view to_string(SelectionStatus s);
SelectionStatus selection_status_from_string(std::string_view s);

struct SelectionResult {
  std::vector<int> chosen_tags;
  std::string raw_reply;
  SelectionStatus status = SelectionStatus::Invalid;
  int attempts = 0;

  bool operator==(const SelectionResult&) const = default;
};

nlohmann::json to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);

/// Deterministic prompt: the instruction verbatim, the valid tag range and the
/// required answer grammar "FINAL: [n, ...]".
std::string build_prompt(const std::string& instruction, const std::vector<int>& valid_tags,
                         TaskSetting setting);

/// Integers of the last "FINAL:" line, else of the last bracketed integer
/// list. Order is kept and duplicates dropped. The result is invalid when no
/// integers are found, any integer is not a valid tag, or fewer than
/// `min_tags` remain.
SelectionResult parse_selection(const std::string& reply, const std::vector<int>& valid_tags,
                                int min_tags = 1);

/// Ground truth for the mock VLM, never sent over the wire. Per role: the
/// correct tag (absent when the object has no tag) and plausible wrong tags.
struct OracleHint {
  std::vector<std::optional<int>> correct;
  std::vector<std::vector<int>> decoys;
};

struct VlmRequest {
  const RgbImage* image = nullptr;
  std::string prompt;
  std::vector<int> valid_tags;
  TaskSetting setting = TaskSetting::Blocks;
  std::optional<OracleHint> hint;
};

/// Chat-style endpoint: image plus prompt in, reply text out.
class VlmClient {
 public:
  virtual ~VlmClient() = default;
  /// Throws BackendError on transport failure or timeout.
  virtual std::string complete(const VlmRequest& request) = 0;
};

struct MockVlmConfig {
  double wrong_tag_probability = 0.0;
  double refuse_probability = 0.0;
  std::uint64_t rng_seed = 0;
  /// The first N calls refuse regardless of the probabilities.
  int scripted_refusals = 0;

  void validate() const;
};

nlohmann::json to_json(const MockVlmConfig& c);
MockVlmConfig mock_vlm_config_from_json(const nlohmann::json& j);

/// Seeded stand-in VLM. With a hint it answers the correct tags unless a
/// wrong answer is drawn (then a decoy per role); without a hint it answers
/// the first valid tags. Refusals carry no answer line.
class MockVlm : public VlmClient {
 public:
  explicit MockVlm(MockVlmConfig config);
  std::string complete(const VlmRequest& request) override;
  int calls() const;

 private:
  MockVlmConfig config_;
  mutable std::mutex mu_;
  Rng rng_;
  int calls_ = 0;
};

/// POST {url}/v1/select {image_png_b64, prompt} -> {reply}.
class HttpVlmClient : public VlmClient {
 public:
  HttpVlmClient(std::string url, int timeout_ms);
  std::string complete(const VlmRequest& request) override;

 private:
  std::string url_;
  int timeout_ms_;
};

/// At most retries + 1 attempts; the first ok result wins, otherwise the last
/// failure is returned. A transport failure yields status timeout.
SelectionResult select(const RgbImage& annotated, const std::string& instruction,
                       const std::vector<int>& valid_tags, TaskSetting setting,
                       VlmClient& client, int retries = 2,
                       const std::optional<OracleHint>& hint = std::nullopt);

}  // namespace iavla
