#include "acdmcp/message.hpp"

#include <array>

namespace acdmcp {

namespace {

constexpr std::array<std::string_view, 18> kKindNames = {
    "NDM",     "STATS",  "SHARE",    "ICH",     "CJN",      "SCJ",       "TCMO", "TCJN",    "SCHICC",
    "FCHICC",  "BACKFSHP", "SLPNICC", "LPACK",  "FLPNICC",  "BACKFSLP",  "RECLUSTER", "DATA", "UNKNOWN",
};

}  // namespace

std::string_view to_string(MsgKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<MsgKind> msg_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<MsgKind>(i);
  }
  return std::nullopt;
}

bool is_clustering_kind(MsgKind kind) {
  switch (kind) {
    case MsgKind::ndm:
    case MsgKind::stats:
    case MsgKind::share:
    case MsgKind::ich:
    case MsgKind::cjn:
    case MsgKind::scj:
    case MsgKind::tcmo:
    case MsgKind::tcjn:
    case MsgKind::recluster:
      return true;
    default:
      return false;
  }
}

bool is_iccom_kind(MsgKind kind) {
  switch (kind) {
    case MsgKind::schicc:
    case MsgKind::fchicc:
    case MsgKind::backfshp:
    case MsgKind::slpnicc:
    case MsgKind::lpack:
    case MsgKind::flpnicc:
    case MsgKind::backfslp:
      return true;
    default:
      return false;
  }
}

MsgKind Message::kind() const {
  // Payload alternatives are declared in MsgKind order.
  return static_cast<MsgKind>(body.index());
}

}  // namespace acdmcp
