#include "fediod/ledger.hpp"

#include <sstream>

namespace fediod {

std::string_view to_string(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::model_params: return "model_params";
    case PayloadKind::logits: return "logits";
    case PayloadKind::disc_scores: return "disc_scores";
    case PayloadKind::label_counts: return "label_counts";
    case PayloadKind::generated_batch: return "generated_batch";
    case PayloadKind::gradient: return "gradient";
  }
  return "unknown";
}

std::string node_name(std::size_t k) { return "node" + std::to_string(k); }

void CommLedger::record(std::string sender, std::string receiver, PayloadKind kind, std::size_t elements,
                        std::size_t round, bool sanitized) {
  records_.push_back({std::move(sender), std::move(receiver), kind, elements, elements * kBytesPerElement, round,
                      sanitized});
}

std::size_t CommLedger::total_bytes() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.bytes;
  return n;
}

std::size_t CommLedger::bytes(PayloadKind kind) const {
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.kind == kind) n += r.bytes;
  return n;
}

std::size_t CommLedger::count(PayloadKind kind) const {
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.kind == kind) ++n;
  return n;
}

std::map<std::string, std::size_t> CommLedger::bytes_by_kind() const {
  std::map<std::string, std::size_t> out;
  for (auto kind : {PayloadKind::model_params, PayloadKind::logits, PayloadKind::disc_scores, PayloadKind::label_counts,
                    PayloadKind::generated_batch, PayloadKind::gradient}) {
    out[std::string(to_string(kind))] = bytes(kind);
  }
  return out;
}

std::string CommLedger::to_csv() const {
  std::ostringstream os;
  os << "round,sender,receiver,payload_kind,elements,bytes,sanitized\n";
  for (const auto& r : records_) {
    os << r.round << ',' << r.sender << ',' << r.receiver << ',' << to_string(r.kind) << ',' << r.elements << ','
       << r.bytes << ',' << (r.sanitized ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace fediod
