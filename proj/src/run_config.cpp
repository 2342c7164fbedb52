#include "pdsep/run_config.hpp"

#include <charconv>
#include <sstream>

#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"

namespace pdsep {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = [] {
    TrainConfig t;
    std::ostringstream lr, rho, eps, lu, lv, clip, gp;
    lr << t.optimizer.learning_rate;
    rho << t.optimizer.decay;
    eps << t.optimizer.epsilon;
    lu << t.loss.lambda_u;
    lv << t.loss.lambda_v;
    clip << t.loss.clip;
    gp << t.loss.lambda_gp;
    return std::map<std::string, std::string>{
        // data
        {"kind", "inst"},
        {"n", "auto"},
        {"split", "train"},
        {"count", "200"},
        {"shape", "256"},
        {"klen", "0"},
        {"seed", "0"},
        // training
        {"epochs", std::to_string(t.epochs)},
        {"n_critic", std::to_string(t.n_critic)},
        {"batch", std::to_string(t.batch_size)},
        {"lr", lr.str()},
        {"rho", rho.str()},
        {"eps", eps.str()},
        {"mode", to_string(t.loss.mode)},
        {"clip", clip.str()},
        {"lambda_u", lu.str()},
        {"lambda_v", lv.str()},
        {"lambda_gp", gp.str()},
        {"workers", "1"},
        {"checkpoint_interval", "0"},
        // architecture
        {"channels", "auto"},
        {"decoder_dropout", "auto"},
        {"down_kernel", "auto"},
        {"up_kernel", "auto"},
        {"critic", "auto"},
        {"leaky_slope", "auto"},
        // inference and scoring
        {"det", "0"},
        {"passes", "1"},
        {"oracle", "0"},
        {"permutation", "0"},
        {"record", "0"},
        {"pgm", "0"},
        // verification
        {"tol", "0.001"},
        {"cases", "100"},
        {"inject_fault", "none"},
        // paths
        {"data", ""},
        {"test", ""},
        {"checkpoint", ""},
        {"input", ""},
        {"out", ""},
    };
  }();
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end || v.empty())
    throw InvalidArgument("config: key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join(const std::vector<double>& v, char sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& s, char sep) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(parse_number<std::size_t>("list", trim(item)));
  if (out.empty()) throw InvalidArgument("config: empty list '" + s + "'");
  return out;
}

std::vector<double> parse_real_list(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(parse_number<double>("list", trim(item)));
  if (out.empty()) throw InvalidArgument("config: empty list '" + s + "'");
  return out;
}

RunConfig::RunConfig() : values_(defaults()) {}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v;
    for (const auto& [key, _] : defaults()) v.push_back(key);
    return v;
  }();
  return k;
}

bool RunConfig::known(const std::string& key) { return defaults().count(key) != 0; }

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  cfg.apply(text);
  return cfg;
}

void RunConfig::apply(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

std::string RunConfig::text() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
  return s;
}

void RunConfig::save(const std::filesystem::path& path) const { io::write_text_file(path, text()); }

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("config: unknown key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("config: unknown key '" + key + "'");
  return it->second;
}

std::uint64_t RunConfig::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
std::size_t RunConfig::size(const std::string& key) const { return parse_number<std::size_t>(key, get(key)); }
double RunConfig::real(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool RunConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw InvalidArgument("config: key '" + key + "' expects 0 or 1, got '" + v + "'");
}

MixKind RunConfig::kind() const {
  const auto& v = get("kind");
  if (v == "inst") return MixKind::Instantaneous;
  if (v == "conv") return MixKind::Convolutive;
  throw InvalidArgument("config: kind must be inst or conv, got '" + v + "'");
}

Shape RunConfig::sample_shape() const {
  auto dims = parse_size_list(get("shape"), 'x');
  if (dims.size() > 2) throw InvalidArgument("config: shape must be T or HxW");
  for (auto d : dims)
    if (d == 0) throw InvalidArgument("config: zero extent in shape '" + get("shape") + "'");
  Shape s{1};
  s.insert(s.end(), dims.begin(), dims.end());
  return s;
}

Shape RunConfig::kernel_shape() const {
  auto dims = parse_size_list(get("klen"), 'x');
  if (dims.size() == 1 && dims[0] == 0) return default_kernel_shape(sample_shape());
  return dims;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.seed = u64("seed");
  t.epochs = size("epochs");
  t.n_critic = size("n_critic");
  t.batch_size = size("batch");
  t.optimizer.learning_rate = real("lr");
  t.optimizer.decay = real("rho");
  t.optimizer.epsilon = real("eps");
  t.loss.mode = critic_mode_from_string(get("mode"));
  t.loss.clip = real("clip");
  t.loss.lambda_u = real("lambda_u");
  t.loss.lambda_v = real("lambda_v");
  t.loss.lambda_gp = real("lambda_gp");
  t.workers = size("workers");
  t.checkpoint_interval = size("checkpoint_interval");
  return t;
}

ArchDescriptor RunConfig::arch(const Shape& sample_shape) const {
  ArchDescriptor a;
  if (sample_shape.size() == 2) {
    a = default_arch_1d(sample_shape[1]);
  } else if (sample_shape.size() == 3) {
    a = default_arch_2d(sample_shape[1], sample_shape[2], sample_shape[0]);
  } else {
    throw InvalidArgument("config: unsupported sample shape " + shape_string(sample_shape));
  }
  auto given = [&](const char* k) { return get(k) != "auto"; };
  if (given("channels")) a.channels = parse_size_list(get("channels"), ',');
  if (given("decoder_dropout")) a.decoder_dropout = parse_real_list(get("decoder_dropout"), ',');
  if (given("down_kernel")) a.down_kernel = size("down_kernel");
  if (given("up_kernel")) a.up_kernel = size("up_kernel");
  if (given("leaky_slope")) a.leaky_slope = real("leaky_slope");
  if (given("critic")) {
    a.critic.clear();
    std::stringstream ss(get("critic"));
    std::string layer;
    while (std::getline(ss, layer, ',')) {
      auto f = parse_size_list(layer, ':');
      if (f.size() != 3) throw InvalidArgument("config: critic layers are channels:kernel:stride, got '" + layer + "'");
      a.critic.push_back({f[0], f[1], f[2]});
    }
  }
  validate(a);
  return a;
}

void RunConfig::set_arch(const ArchDescriptor& a) {
  set("channels", join(a.channels, ','));
  set("decoder_dropout", join(a.decoder_dropout, ','));
  set("down_kernel", std::to_string(a.down_kernel));
  set("up_kernel", std::to_string(a.up_kernel));
  std::ostringstream ls;
  ls << a.leaky_slope;
  set("leaky_slope", ls.str());
  std::string c;
  for (std::size_t i = 0; i < a.critic.size(); ++i) {
    if (i) c += ',';
    c += std::to_string(a.critic[i].channels) + ":" + std::to_string(a.critic[i].kernel) + ":" +
         std::to_string(a.critic[i].stride);
  }
  set("critic", c);
}

}  // namespace pdsep
