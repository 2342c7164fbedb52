#include "pdsep/checkpoint.hpp"

#include <sstream>

#include <zlib.h>

#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"
#include "pdsep/trainer.hpp"

namespace pdsep {

namespace {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_arch(io::Writer& w, const ArchDescriptor& a) {
  w.u32(static_cast<std::uint32_t>(a.input_shape.size()));
  for (auto e : a.input_shape) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(a.channels.size()));
  for (auto c : a.channels) w.u32(static_cast<std::uint32_t>(c));
  for (double p : a.decoder_dropout) w.f64(p);
  w.u32(static_cast<std::uint32_t>(a.down_kernel));
  w.u32(static_cast<std::uint32_t>(a.up_kernel));
  w.u32(static_cast<std::uint32_t>(a.critic.size()));
  for (const auto& l : a.critic) {
    w.u32(static_cast<std::uint32_t>(l.channels));
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u32(static_cast<std::uint32_t>(l.stride));
  }
  w.f64(a.leaky_slope);
}

ArchDescriptor read_arch(io::Reader& r) {
  ArchDescriptor a;
  const std::uint32_t rank = r.u32();
  if (rank < 2 || rank > 3) throw FormatError("checkpoint: invalid input rank");
  a.input_shape.clear();
  for (std::uint32_t i = 0; i < rank; ++i) a.input_shape.push_back(r.u32());
  const std::uint32_t depth = r.u32();
  if (depth == 0 || depth > 16) throw FormatError("checkpoint: invalid generator depth");
  a.channels.clear();
  for (std::uint32_t i = 0; i < depth; ++i) a.channels.push_back(r.u32());
  a.decoder_dropout.clear();
  for (std::uint32_t i = 0; i < depth; ++i) a.decoder_dropout.push_back(r.f64());
  a.down_kernel = r.u32();
  a.up_kernel = r.u32();
  const std::uint32_t layers = r.u32();
  if (layers == 0 || layers > 16) throw FormatError("checkpoint: invalid critic depth");
  a.critic.clear();
  for (std::uint32_t i = 0; i < layers; ++i) {
    CriticLayer l;
    l.channels = r.u32();
    l.kernel = r.u32();
    l.stride = r.u32();
    a.critic.push_back(l);
  }
  a.leaky_slope = r.f64();
  try {
    validate(a);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return a;
}

template <typename F>
void for_each_net(SubModel& m, F&& f) {
  f("ga", m.ga.params(), m.opt_ga);
  f("gb", m.gb.params(), m.opt_gb);
  f("da", m.da.params(), m.opt_da);
  f("db", m.db.params(), m.opt_db);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const PDualGanModel& model) {
  auto& mm = const_cast<PDualGanModel&>(model);  // for_each_net is shared with the loader; nothing is modified
  io::Writer w;
  w.magic("PDGM");
  w.u16(kCheckpointFormatVersion);
  write_arch(w, model.arch());
  w.u64(model.seed());
  w.u32(static_cast<std::uint32_t>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i)
    for_each_net(mm.sub(i), [&](const char* net, ParamSet& ps, std::vector<RmsPropState>&) {
      w.u32(static_cast<std::uint32_t>(ps.size()));
      for (std::size_t k = 0; k < ps.size(); ++k) {
        w.str("sub" + std::to_string(i) + "." + net + "." + ps.name(k));
        const auto& shape = ps[k].shape();
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (auto e : shape) w.u32(static_cast<std::uint32_t>(e));
        w.f32s(ps[k].data());
      }
    });
  for (std::size_t i = 0; i < model.size(); ++i)
    for_each_net(mm.sub(i), [&](const char*, ParamSet& ps, std::vector<RmsPropState>& st) {
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto& acc = st.at(k).accumulator;
        w.u32(static_cast<std::uint32_t>(acc.size()));
        w.f32s(acc);
      }
    });
  for (std::size_t i = 0; i < model.size(); ++i) w.u64(model.sub(i).step);
  w.u32(crc32_of(w.buffer()));
  return std::move(w.buffer());
}

PDualGanModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10) throw FormatError("checkpoint: truncated file");
  {
    io::Reader head(bytes, "checkpoint");
    head.expect_magic("PDGM");
    const std::uint16_t version = head.u16();
    if (version != kCheckpointFormatVersion)
      throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc32_of(body) != stored) throw FormatError("checkpoint: checksum mismatch");

  io::Reader r(body, "checkpoint");
  r.expect_magic("PDGM");
  r.u16();
  ArchDescriptor arch = read_arch(r);
  const std::uint64_t seed = r.u64();
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 1024) throw FormatError("checkpoint: implausible sub-model count");
  PDualGanModel model(arch, n, seed);
  for (std::size_t i = 0; i < n; ++i)
    for_each_net(model.sub(i), [&](const char* net, ParamSet& ps, std::vector<RmsPropState>&) {
      const std::uint32_t count = r.u32();
      if (count != ps.size()) throw FormatError("checkpoint: parameter count mismatch");
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const std::string name = r.str();
        const std::string expected = "sub" + std::to_string(i) + "." + net + "." + ps.name(k);
        if (name != expected) throw FormatError("checkpoint: expected parameter " + expected + ", found " + name);
        const std::uint32_t rank = r.u32();
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
        if (shape != ps[k].shape()) throw FormatError("checkpoint: shape mismatch for " + name);
        auto values = r.f32s(shape_size(shape));
        auto dst = ps[k].mutable_data();
        std::copy(values.begin(), values.end(), dst.begin());
      }
    });
  for (std::size_t i = 0; i < n; ++i)
    for_each_net(model.sub(i), [&](const char*, ParamSet& ps, std::vector<RmsPropState>& st) {
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const std::uint32_t len = r.u32();
        if (len != ps[k].size()) throw FormatError("checkpoint: optimizer state size mismatch");
        st[k].accumulator = r.f32s(len);
      }
    });
  for (std::size_t i = 0; i < n; ++i) model.sub(i).step = r.u64();
  if (r.remaining() != 0) throw FormatError("checkpoint: unexpected trailing bytes");
  return model;
}

void save_checkpoint(const PDualGanModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

PDualGanModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

std::string describe(const ArchDescriptor& a) {
  std::ostringstream os;
  auto join = [&](const auto& v, const char* sep) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? sep : "") << v[i];
    return s.str();
  };
  os << "arch.shape=" << join(a.input_shape, "x") << '\n';
  os << "arch.channels=" << join(a.channels, ",") << '\n';
  os << "arch.dropout=" << join(a.decoder_dropout, ",") << '\n';
  os << "arch.down_kernel=" << a.down_kernel << '\n';
  os << "arch.up_kernel=" << a.up_kernel << '\n';
  os << "arch.critic=";
  for (std::size_t i = 0; i < a.critic.size(); ++i)
    os << (i ? "," : "") << a.critic[i].channels << ':' << a.critic[i].kernel << ':' << a.critic[i].stride;
  os << '\n';
  os << "arch.leaky_slope=" << a.leaky_slope << '\n';
  return os.str();
}

}  // namespace pdsep
