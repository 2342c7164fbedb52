#include <filesystem>

#include "doctest.h"
#include "pdsep/binary_io.hpp"
#include "pdsep/checkpoint.hpp"
#include "pdsep/dataset.hpp"
#include "pdsep/error.hpp"
#include "pdsep/trainer.hpp"

using namespace pdsep;
namespace fs = std::filesystem;

namespace {

PDualGanModel trained_model(std::size_t n, const Shape& shape, std::uint64_t seed) {
  ArchDescriptor a = shape.size() == 2 ? default_arch_1d(shape[1]) : default_arch_2d(shape[1], shape[2]);
  if (shape.size() == 2) {
    a.channels = {4, 8};
    a.decoder_dropout = {0.0, 0.5};
  }
  PDualGanModel m(a, n, seed);
  auto bank = builtin_bank(shape);
  auto ds = synth_dataset(bank, shape, 2, MixKind::Instantaneous, n, {}, seed);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.n_critic = 1;
  train(m, ds, cfg);
  return m;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  for (const Shape& shape : {Shape{1, 64}, Shape{1, 16, 16}}) {
    auto m = trained_model(2, shape, 11);
    auto bytes = encode_checkpoint(m);
    auto back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.arch() == m.arch());
    CHECK(back.seed() == m.seed());
    REQUIRE(back.size() == m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(back.sub(i).step == m.sub(i).step);
      const auto& pa = m.sub(i).ga.params();
      const auto& pb = back.sub(i).ga.params();
      REQUIRE(pa.size() == pb.size());
      for (std::size_t k = 0; k < pa.size(); ++k) {
        CHECK(pa.name(k) == pb.name(k));
        CHECK(std::equal(pa[k].data().begin(), pa[k].data().end(), pb[k].data().begin()));
      }
      CHECK(back.sub(i).opt_da.size() == m.sub(i).opt_da.size());
    }

    // identical continuation after reload
    auto bank = builtin_bank(shape);
    auto ds = synth_dataset(bank, shape, 1, MixKind::Instantaneous, 2, {}, 5);
    TrainConfig cfg;
    cfg.n_critic = 1;
    train_step(m, ds.records[0], cfg);
    train_step(back, ds.records[0], cfg);
    CHECK(encode_checkpoint(m) == encode_checkpoint(back));
  }
}

TEST_CASE("checkpoint file round trip") {
  auto m = trained_model(3, Shape{1, 32}, 2);
  fs::path p = fs::temp_directory_path() / "pdsep_test_model.pdgm";
  save_checkpoint(m, p);
  CHECK(io::read_file(p) == encode_checkpoint(m));
  CHECK(encode_checkpoint(load_checkpoint(p)) == encode_checkpoint(m));
  fs::remove(p);
  CHECK_THROWS_AS(load_checkpoint(p), FormatError);
}

TEST_CASE("corruption and truncation are detected") {
  auto bytes = encode_checkpoint(trained_model(2, Shape{1, 32}, 4));
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x40;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 4, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
  }
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(longer), FormatError);
}

TEST_CASE("architecture description lists the fields") {
  auto text = describe(default_arch_1d(256));
  CHECK(text.find("arch.channels=8,16,16,16\n") != std::string::npos);
  CHECK(text.find("arch.shape=1x256\n") != std::string::npos);
}
