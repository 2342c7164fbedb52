#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "pdsep/array_file.hpp"
#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"
#include "pdsep/run_config.hpp"

using namespace pdsep;
namespace fs = std::filesystem;

TEST_CASE("defaults mirror the library defaults") {
  RunConfig c;
  TrainConfig t = c.train_config();
  TrainConfig ref;
  CHECK(t.epochs == ref.epochs);
  CHECK(t.n_critic == ref.n_critic);
  CHECK(t.optimizer.learning_rate == ref.optimizer.learning_rate);
  CHECK(t.optimizer.decay == ref.optimizer.decay);
  CHECK(t.loss.lambda_u == ref.loss.lambda_u);
  CHECK(t.loss.clip == ref.loss.clip);
  CHECK(t.loss.mode == CriticMode::Clip);
  CHECK(c.sample_shape() == Shape{1, 256});
  CHECK(c.arch(c.sample_shape()) == default_arch_1d(256));
  CHECK(c.kind() == MixKind::Instantaneous);
}

TEST_CASE("text round trip and overrides") {
  RunConfig c;
  c.set("epochs", "7");
  c.set("mode", "gp");
  c.set("shape", "32x16");
  c.set("channels", "4,8");
  c.set("decoder_dropout", "0,0.5");
  auto back = RunConfig::parse(c.text());
  CHECK(back.text() == c.text());
  CHECK(back.size("epochs") == 7);
  CHECK(back.train_config().loss.mode == CriticMode::GradientPenalty);
  CHECK(back.sample_shape() == Shape{1, 32, 16});
  auto arch = back.arch(back.sample_shape());
  CHECK(arch.channels == std::vector<std::size_t>{4, 8});
  CHECK(arch.critic == default_arch_2d(32, 16).critic);

  back.apply("epochs=9\n# comment\n\nseed = 4\n");
  CHECK(back.size("epochs") == 9);
  CHECK(back.u64("seed") == 4);

  // sorted and complete
  std::string prev;
  std::size_t lines = 0;
  std::istringstream in(c.text());
  for (std::string line; std::getline(in, line); ++lines) {
    auto key = line.substr(0, line.find('='));
    CHECK(prev < key);
    prev = key;
  }
  CHECK(lines == RunConfig::keys().size());
}

TEST_CASE("set_arch writes back an equivalent architecture") {
  RunConfig c;
  c.set("shape", "64");
  ArchDescriptor a = default_arch_1d(64);
  a.channels = {3, 5};
  a.decoder_dropout = {0.0, 0.25};
  a.critic = {{6, 4, 2}, {1, 3, 1}};
  c.set_arch(a);
  CHECK(RunConfig::parse(c.text()).arch(Shape{1, 64}) == a);
}

TEST_CASE("invalid configuration") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("nope", "1"), InvalidArgument);
  CHECK_THROWS_AS(RunConfig::parse("nope=1\n"), InvalidArgument);
  CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), InvalidArgument);
  c.set("epochs", "ten");
  CHECK_THROWS_AS(c.size("epochs"), InvalidArgument);
  c.set("det", "maybe");
  CHECK_THROWS_AS(c.flag("det"), InvalidArgument);
  c.set("kind", "other");
  CHECK_THROWS_AS(c.kind(), InvalidArgument);
  c.set("shape", "0");
  CHECK_THROWS_AS(c.sample_shape(), InvalidArgument);
  CHECK(RunConfig().flag("det") == false);
  CHECK_THROWS_AS(parse_size_list("", ','), InvalidArgument);
  CHECK(parse_real_list("0.5,1", ',') == std::vector<double>{0.5, 1.0});
}

TEST_CASE("config file round trip") {
  fs::path p = fs::temp_directory_path() / "pdsep_test.config";
  RunConfig c;
  c.set("lr", "0.001");
  c.save(p);
  CHECK(RunConfig::load(p).text() == c.text());
  CHECK(RunConfig::load(p).real("lr") == 0.001);
  fs::remove(p);
  CHECK_THROWS(RunConfig::load(p));
}

TEST_CASE("array file round trip and validation") {
  ArrayFile a{{1, 2, 3}, {0.5f, -1.0f, 2.0f, 0.0f, 1e-8f, -3.25f}};
  auto bytes = encode_array(a);
  CHECK(bytes.size() == 4 + 4 + 3 * 4 + 6 * 4);
  auto b = decode_array(bytes);
  CHECK(b.shape == a.shape);
  CHECK(b.values == a.values);
  auto extra = bytes;
  extra.push_back(1);
  CHECK_THROWS_AS(decode_array(extra), FormatError);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_array(bytes), FormatError);
  auto bad = encode_array(a);
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_array(bad), FormatError);
  CHECK_THROWS_AS(encode_array(ArrayFile{{2, 2}, {1.0f}}), InvalidArgument);

  fs::path p = fs::temp_directory_path() / "pdsep_test_img.pgm";
  save_pgm(p, ArrayFile{{1, 2, 2}, {-1.0f, 1.0f, 0.0f, 5.0f}});
  auto pgm = io::read_file(p);
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(pgm.size() == header.size() + 4);
  CHECK(std::string(pgm.begin(), pgm.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
  CHECK(pgm[header.size()] == 0);
  CHECK(pgm[header.size() + 1] == 255);
  CHECK(pgm[header.size() + 3] == 255);
  fs::remove(p);
}
