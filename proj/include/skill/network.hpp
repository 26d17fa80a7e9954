#pragma once

// Knowledge packets and the simulated broadcast network.
//
// Packet wire layout (little-endian):
//   "SKP1" | task_id u32 | mapper u8 | class count u32 | names (u16 len + bytes)
//   | head | bb count u32 + count×f32 | h2t flag u8 [+ h2t] | anchor or share

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skill/accounting.hpp"
#include "skill/backbone_bb.hpp"
#include "skill/binio.hpp"
#include "skill/error.hpp"
#include "skill/head.hpp"
#include "skill/taskmap_gmmc.hpp"
#include "skill/taskmap_maha.hpp"

namespace skill {

enum class MapperMode : std::uint8_t { Gmmc = 0, Maha = 1 };

inline const char* to_string(MapperMode m) { return m == MapperMode::Gmmc ? "gmmc" : "maha"; }

inline MapperMode parse_mapper_mode(const std::string& s) {
  if (s == "gmmc") return MapperMode::Gmmc;
  if (s == "maha") return MapperMode::Maha;
  fail(ErrorCode::ConfigInvalid, "mapper must be gmmc or maha, got '" + s + "'");
}

// Raw-image exemplar bytes per task counted in the nominal byte mode: 5 images of
// 299×299×3 bytes.
inline constexpr std::uint64_t kPaperExemplarBytes = 5ULL * 299 * 299 * 3;

struct KnowledgePacket {
  std::uint32_t task_id = 0;
  MapperMode mode = MapperMode::Gmmc;
  std::vector<std::string> class_names;
  Head head;
  Vector bb;  // flat beneficial biases; empty when BB is off
  std::optional<H2tHead> h2t;
  std::optional<GmmcAnchor> anchor;
  std::optional<MahaTeacherShare> share;

  void validate() const {
    require(class_names.size() == head.classes(), ErrorCode::ShapeMismatch, "class names != head classes");
    require(head.task_id == task_id, ErrorCode::PayloadMismatch, "head task_id != packet task_id");
    if (mode == MapperMode::Gmmc) {
      require(anchor.has_value() && !share.has_value(), ErrorCode::PayloadMismatch,
              "GMMC packet must carry an anchor and no exemplar share");
      require(anchor->task_id == task_id, ErrorCode::PayloadMismatch, "anchor task_id != packet task_id");
    } else {
      require(share.has_value() && !anchor.has_value(), ErrorCode::PayloadMismatch,
              "MAHA packet must carry an exemplar share and no anchor");
      require(share->task_id == task_id, ErrorCode::PayloadMismatch, "share task_id != packet task_id");
    }
    require(!h2t || !bb.empty(), ErrorCode::PayloadMismatch, "Head2Toe payload requires BB");
  }

  bool operator==(const KnowledgePacket&) const = default;
};

inline Bytes serialize_packet(const KnowledgePacket& p) {
  p.validate();
  ByteWriter w;
  w.raw("SKP1");
  w.u32(p.task_id);
  w.u8(static_cast<std::uint8_t>(p.mode));
  w.u32(static_cast<std::uint32_t>(p.class_names.size()));
  for (const auto& n : p.class_names) {
    require(n.size() <= 0xFFFF, ErrorCode::InvalidArgument, "class name too long");
    w.u16(static_cast<std::uint16_t>(n.size()));
    w.raw(n);
  }
  encode_head(w, p.head);
  w.u32(static_cast<std::uint32_t>(p.bb.size()));
  w.f32s(p.bb);
  w.u8(p.h2t ? 1 : 0);
  if (p.h2t) encode_h2t(w, *p.h2t);
  if (p.mode == MapperMode::Gmmc)
    encode_anchor(w, *p.anchor);
  else
    encode_share(w, *p.share);
  return w.take();
}

inline KnowledgePacket deserialize_packet(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "packet");
  require(r.str(4) == "SKP1", ErrorCode::BadMagic, "packet: bad magic");
  KnowledgePacket p;
  p.task_id = r.u32();
  const std::uint8_t mode = r.u8();
  require(mode <= 1, ErrorCode::PayloadMismatch, "packet: unknown mapper mode");
  p.mode = static_cast<MapperMode>(mode);
  const std::uint32_t c = r.u32();
  r.need(2 * static_cast<std::size_t>(c));
  for (std::uint32_t i = 0; i < c; ++i) p.class_names.push_back(r.str(r.u16()));
  p.head = decode_head(r);
  const std::uint32_t nbb = r.u32();
  r.need(4 * static_cast<std::size_t>(nbb));
  p.bb.resize(nbb);
  r.f32s(p.bb);
  if (r.u8() != 0) p.h2t = decode_h2t(r);
  if (p.mode == MapperMode::Gmmc)
    p.anchor = decode_anchor(r);
  else
    p.share = decode_share(r);
  require(r.done(), ErrorCode::TruncatedFile, "packet: trailing bytes");
  p.validate();
  return p;
}

inline std::uint64_t paper_head_bytes(std::uint64_t classes, std::uint64_t dim) { return 4 * dim * classes; }
inline std::uint64_t paper_bb_bytes(std::uint64_t units) { return 4 * units; }
inline std::uint64_t paper_anchor_bytes(std::uint64_t k, std::uint64_t dim) { return 4 * k * (dim + dim); }
inline std::uint64_t paper_exemplar_bytes() { return kPaperExemplarBytes; }

// Exact mode is the serialized length. The nominal mode counts only the
// payload inventory: head, BB, Head2Toe linear weights, GMMC means and
// variances (no mixture weights) and a fixed raw-image budget for MAHA.
inline std::uint64_t packet_size(const KnowledgePacket& p, ByteMode mode) {
  if (mode == ByteMode::Exact) return serialize_packet(p).size();
  std::uint64_t n = paper_head_bytes(p.head.classes(), p.head.dim()) + paper_bb_bytes(p.bb.size());
  if (p.h2t) n += paper_head_bytes(p.h2t->linear.classes(), p.h2t->linear.dim());
  n += p.mode == MapperMode::Gmmc ? paper_anchor_bytes(p.anchor->k(), p.anchor->dim()) : paper_exemplar_bytes();
  return n;
}

// ---------------------------------------------------------------------------

struct Delivery {
  std::uint32_t sender = 0;
  std::uint32_t receiver = 0;
  std::uint32_t task_id = 0;
  std::uint64_t bytes_exact = 0;
  std::uint64_t bytes_paper = 0;
  bool operator==(const Delivery&) const = default;
};

// Fully connected broadcast. Every broadcast reaches all other agents in
// ascending id order; bytes are logged as egress once for the sender and as
// ingress for each receiver.
class SimNetwork {
 public:
  using DeliverFn = std::function<void(std::uint32_t receiver, std::span<const std::uint8_t> packet)>;

  SimNetwork(std::vector<std::uint32_t> roster, ByteMode mode = ByteMode::Paper) : roster_(std::move(roster)), mode_(mode) {
    std::sort(roster_.begin(), roster_.end());
    require(!roster_.empty(), ErrorCode::InvalidArgument, "network needs at least one agent");
    require(std::adjacent_find(roster_.begin(), roster_.end()) == roster_.end(), ErrorCode::InvalidArgument,
            "duplicate agent id in roster");
  }

  std::vector<Delivery> broadcast(std::uint32_t sender, const KnowledgePacket& p, CostLedger& ledger,
                                  const DeliverFn& deliver) {
    require(std::binary_search(roster_.begin(), roster_.end(), sender), ErrorCode::UnknownSender,
            "agent " + std::to_string(sender) + " is not in the roster");
    Bytes bytes = serialize_packet(p);
    const std::uint64_t exact = bytes.size();
    const std::uint64_t paper = packet_size(p, ByteMode::Paper);
    ledger.add_egress(sender, exact, paper);
    std::vector<Delivery> out;
    for (std::uint32_t r : roster_) {
      if (r == sender) continue;
      ledger.add_ingress(r, exact, paper);
      if (deliver) deliver(r, bytes);
      out.push_back({sender, r, p.task_id, exact, paper});
    }
    log_.insert(log_.end(), out.begin(), out.end());
    packets_[{sender, p.task_id}] = std::move(bytes);
    return out;
  }

  // Re-delivers every logged packet in log order.
  void replay(const DeliverFn& deliver) const {
    for (const auto& d : log_) deliver(d.receiver, packets_.at({d.sender, d.task_id}));
  }

  const std::vector<std::uint32_t>& roster() const noexcept { return roster_; }
  const std::vector<Delivery>& log() const noexcept { return log_; }
  ByteMode mode() const noexcept { return mode_; }

  std::uint64_t total_bytes(ByteMode m) const {
    std::uint64_t s = 0;
    for (const auto& d : log_) s += m == ByteMode::Exact ? d.bytes_exact : d.bytes_paper;
    return s;
  }

  std::string log_csv() const {
    std::ostringstream os;
    os << "sender,receiver,task_id,bytes,mode\n";
    for (const auto& d : log_)
      os << d.sender << ',' << d.receiver << ',' << d.task_id << ','
         << (mode_ == ByteMode::Exact ? d.bytes_exact : d.bytes_paper) << ',' << to_string(mode_) << '\n';
    return os.str();
  }

 private:
  std::vector<std::uint32_t> roster_;
  ByteMode mode_;
  std::vector<Delivery> log_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, Bytes> packets_;
};

}  // namespace skill
