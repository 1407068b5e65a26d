#include "cxlsim/message.hpp"

namespace cxlsim {

std::string_view to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Rd: return "Rd";
    case MsgKind::RdX: return "RdX";
    case MsgKind::Rd_ACK: return "Rd_ACK";
    case MsgKind::RdX_ACK: return "RdX_ACK";
    case MsgKind::Inv: return "Inv";
    case MsgKind::Inv_ACK: return "Inv_ACK";
    case MsgKind::WB_Evict: return "WB_Evict";
    case MsgKind::WT_Store: return "WT_Store";
    case MsgKind::WT_ACK: return "WT_ACK";
    case MsgKind::REPL: return "REPL";
    case MsgKind::REPL_ACK: return "REPL_ACK";
    case MsgKind::VAL: return "VAL";
    case MsgKind::LogDump: return "LogDump";
    case MsgKind::DumpDone: return "DumpDone";
    case MsgKind::DumpNotice: return "DumpNotice";
    case MsgKind::ClearGrant: return "ClearGrant";
    case MsgKind::Interrupt: return "Interrupt";
    case MsgKind::InterruptResp: return "InterruptResp";
    case MsgKind::InitRecov: return "InitRecov";
    case MsgKind::InitRecovResp: return "InitRecovResp";
    case MsgKind::FetchLatestVers: return "FetchLatestVers";
    case MsgKind::FetchLatestVersResp: return "FetchLatestVersResp";
    case MsgKind::RecovEnd: return "RecovEnd";
    case MsgKind::RecovEndResp: return "RecovEndResp";
    case MsgKind::MSI: return "MSI";
  }
  return "?";
}

TrafficClass traffic_class(MsgKind k) {
  switch (k) {
    case MsgKind::Rd:
    case MsgKind::RdX:
    case MsgKind::Rd_ACK:
    case MsgKind::RdX_ACK:
    case MsgKind::Inv:
    case MsgKind::Inv_ACK:
    case MsgKind::WB_Evict:
    case MsgKind::WT_Store:
    case MsgKind::WT_ACK:
      return TrafficClass::Coherence;
    case MsgKind::REPL:
    case MsgKind::REPL_ACK:
    case MsgKind::VAL:
      return TrafficClass::Replication;
    case MsgKind::LogDump:
    case MsgKind::DumpDone:
    case MsgKind::DumpNotice:
    case MsgKind::ClearGrant:
      return TrafficClass::LogDump;
    default:
      return TrafficClass::Recovery;
  }
}

std::string_view to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::Coherence: return "coherence";
    case TrafficClass::Replication: return "replication";
    case TrafficClass::LogDump: return "logdump";
    case TrafficClass::Recovery: return "recovery";
  }
  return "?";
}

}  // namespace cxlsim
