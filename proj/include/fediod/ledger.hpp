#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fediod {

enum class PayloadKind { model_params, logits, disc_scores, label_counts, generated_batch, gradient };

std::string_view to_string(PayloadKind kind);
inline constexpr std::size_t kBytesPerElement = 8;

struct CommRecord {
  std::string sender;
  std::string receiver;
  PayloadKind kind = PayloadKind::model_params;
  std::size_t elements = 0;
  std::size_t bytes = 0;
  std::size_t round = 0;
  bool sanitized = false;
};

/// Append-only log of every simulated message, with fp64 payload accounting.
class CommLedger {
 public:
  void record(std::string sender, std::string receiver, PayloadKind kind, std::size_t elements, std::size_t round,
              bool sanitized = false);

  const std::vector<CommRecord>& records() const { return records_; }
  std::size_t total_bytes() const;
  std::size_t bytes(PayloadKind kind) const;
  std::size_t count(PayloadKind kind) const;
  std::map<std::string, std::size_t> bytes_by_kind() const;

  /// Header: round,sender,receiver,payload_kind,elements,bytes,sanitized
  std::string to_csv() const;

 private:
  std::vector<CommRecord> records_;
};

std::string node_name(std::size_t k);
inline constexpr std::string_view kServer = "server";

}  // namespace fediod
