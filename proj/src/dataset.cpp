#include "pdsep/dataset.hpp"

#include <fstream>
#include <sstream>

#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"

namespace pdsep {

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace io

void validate(const Dataset& ds) {
  const auto& m = ds.manifest;
  if (m.sources < 2) throw InvalidArgument("dataset: need at least two sources");
  if (m.shape.size() != 2 && m.shape.size() != 3) throw InvalidArgument("dataset: sample shape must be [C,T] or [C,H,W]");
  if (m.count != ds.records.size())
    throw InvalidArgument("dataset: manifest count " + std::to_string(m.count) + " but " +
                          std::to_string(ds.records.size()) + " records");
  const std::size_t size = shape_size(m.shape);
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    const std::string where = "dataset record " + std::to_string(r);
    if (rec.mixture.size() != size) throw InvalidArgument(where + ": mixture has the wrong size");
    if (rec.sources.size() != m.sources) throw InvalidArgument(where + ": wrong number of sources");
    for (const auto& s : rec.sources)
      if (s.size() != size) throw InvalidArgument(where + ": source has the wrong size");
    if (rec.spec.kind != m.kind || rec.spec.sources != m.sources)
      throw InvalidArgument(where + ": mixing spec disagrees with the manifest");
    validate(rec.spec);
  }
}

std::uint64_t test_split_seed(std::uint64_t seed) { return derive_seed(seed, 0x7e57'5e7ULL); }

Dataset synth_dataset(std::span<const std::vector<double>> bank, const Shape& sample_shape, std::size_t count,
                      MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("synth: need at least two sources");
  if (count == 0) throw InvalidArgument("synth: record count must be at least 1");
  if (bank.size() < n)
    throw InvalidArgument("synth: source bank holds " + std::to_string(bank.size()) + " sources, need " +
                          std::to_string(n));
  const std::size_t size = shape_size(sample_shape);
  std::vector<SignalView> sources;
  for (std::size_t i = 0; i < n; ++i) {
    if (bank[i].size() != size) throw InvalidArgument("synth: bank source does not match sample shape");
    sources.emplace_back(bank[i]);
  }

  Dataset ds;
  ds.manifest.sources = static_cast<std::uint32_t>(n);
  ds.manifest.shape = sample_shape;
  ds.manifest.kind = kind;
  ds.manifest.count = static_cast<std::uint32_t>(count);
  ds.manifest.seed = seed;
  std::vector<std::vector<float>> src_f(n);
  for (std::size_t i = 0; i < n; ++i) src_f[i].assign(bank[i].begin(), bank[i].end());
  ds.records.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    SampleRecord rec;
    rec.spec = random_spec(kind, n, kind == MixKind::Convolutive ? kernel_shape : Shape{}, derive_seed(seed, r));
    std::vector<double> x = apply_spec(sources, sample_shape, rec.spec);
    rec.mixture.assign(x.begin(), x.end());
    rec.sources = src_f;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Split synth_split(std::span<const std::vector<double>> bank, const Shape& sample_shape, std::size_t train_count,
                  std::size_t test_count, MixKind kind, std::size_t n, const Shape& kernel_shape, std::uint64_t seed) {
  return Split{synth_dataset(bank, sample_shape, train_count, kind, n, kernel_shape, seed),
               synth_dataset(bank, sample_shape, test_count, kind, n, kernel_shape, test_split_seed(seed))};
}

std::vector<std::vector<double>> builtin_bank(const Shape& sample_shape) {
  if (sample_shape.size() == 2 && sample_shape[0] == 1) return source_bank_1d(sample_shape[1]);
  if (sample_shape.size() == 3 && sample_shape[0] == 1) return source_bank_2d(sample_shape[1], sample_shape[2]);
  throw InvalidArgument("built-in source bank needs shape [1,T] or [1,H,W], got " + shape_string(sample_shape));
}

// ---------------------------------------------------------------------------
// PDG1 container

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  validate(ds);
  const auto& m = ds.manifest;
  io::Writer w;
  w.magic("PDG1");
  w.u16(m.version);
  w.u32(m.sources);
  w.u32(static_cast<std::uint32_t>(m.shape.size()));
  for (auto e : m.shape) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(m.kind));
  w.u32(m.count);
  w.u64(m.seed);
  for (const auto& rec : ds.records) {
    w.f32s(rec.mixture);
    for (const auto& s : rec.sources) w.f32s(s);
    w.u32(static_cast<std::uint32_t>(rec.spec.kind));
    w.u32(static_cast<std::uint32_t>(rec.spec.kernel_shape.size()));
    for (auto e : rec.spec.kernel_shape) w.u32(static_cast<std::uint32_t>(e));
    w.f32s(rec.spec.coefficients);
    w.f32(rec.spec.scale);
    w.u64(rec.spec.seed);
  }
  return std::move(w.buffer());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes, "dataset");
  r.expect_magic("PDG1");
  Dataset ds;
  auto& m = ds.manifest;
  m.version = r.u16();
  if (m.version != kDatasetFormatVersion)
    throw FormatError("dataset: unsupported format version " + std::to_string(m.version));
  m.sources = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank != 2 && rank != 3) throw FormatError("dataset: sample rank must be 2 or 3");
  for (std::uint32_t i = 0; i < rank; ++i) m.shape.push_back(r.u32());
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw FormatError("dataset: unknown mixing kind code " + std::to_string(kind));
  m.kind = static_cast<MixKind>(kind);
  m.count = r.u32();
  m.seed = r.u64();
  if (m.sources < 2 || m.sources > 1024) throw FormatError("dataset: implausible source count");
  const std::size_t size = shape_size(m.shape);
  if (size == 0) throw FormatError("dataset: empty sample shape");
  for (std::uint32_t i = 0; i < m.count; ++i) {
    SampleRecord rec;
    rec.mixture = r.f32s(size);
    for (std::uint32_t s = 0; s < m.sources; ++s) rec.sources.push_back(r.f32s(size));
    const std::uint32_t rkind = r.u32();
    if (rkind > 1) throw FormatError("dataset: unknown mixing kind code in record");
    rec.spec.kind = static_cast<MixKind>(rkind);
    rec.spec.sources = m.sources;
    const std::uint32_t krank = r.u32();
    if (krank > 2) throw FormatError("dataset: kernel rank must be at most 2");
    for (std::uint32_t k = 0; k < krank; ++k) rec.spec.kernel_shape.push_back(r.u32());
    rec.spec.coefficients = r.f32s(m.sources * rec.spec.kernel_size());
    rec.spec.scale = r.f32();
    rec.spec.seed = r.u64();
    ds.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("dataset: trailing bytes after the last record");
  try {
    validate(ds);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return ds;
}

std::string manifest_text(const Dataset& ds) {
  const auto& m = ds.manifest;
  std::ostringstream os;
  os << "format=PDG1\n";
  os << "version=" << m.version << '\n';
  os << "n=" << m.sources << '\n';
  os << "rank=" << m.shape.size() << '\n';
  os << "shape=";
  for (std::size_t i = 0; i < m.shape.size(); ++i) os << (i ? "x" : "") << m.shape[i];
  os << '\n';
  os << "kind=" << to_string(m.kind) << '\n';
  os << "kernel=";
  if (!ds.records.empty() && !ds.records[0].spec.kernel_shape.empty()) {
    const auto& ks = ds.records[0].spec.kernel_shape;
    for (std::size_t i = 0; i < ks.size(); ++i) os << (i ? "x" : "") << ks[i];
  } else {
    os << "none";
  }
  os << '\n';
  os << "count=" << m.count << '\n';
  os << "seed=" << m.seed << '\n';
  return os.str();
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".manifest";
  return p;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(ds));
  io::write_text_file(manifest_path(path), manifest_text(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

}  // namespace pdsep
