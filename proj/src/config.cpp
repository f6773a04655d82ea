#include "codir/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace codir {

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec spec;
  spec.n_classes = n_classes;
  spec.n_context = n_context;
  spec.height = height;
  spec.width = width;
  spec.channels = 1;
  spec.n_train = n_train;
  spec.n_val = n_val;
  spec.n_test = n_test;
  spec.seed = seed;
  return spec;
}

std::size_t RunConfig::env_label_count() const {
  return env_source == EnvSource::kClass ? n_classes : n_context;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line_no) + ": " + what);
}

std::uint64_t parse_count(const std::string& value, std::size_t line_no, const std::string& key) {
  if (!value.empty() && value.front() == '-')
    fail(line_no, key + " must be non-negative, got " + value);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    fail(line_no, "cannot parse integer for " + key + ": '" + value + "'");
  return out;
}

double parse_real(const std::string& value, std::size_t line_no, const std::string& key) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(line_no, "cannot parse number for " + key + ": '" + value + "'");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(line_no, "empty key or value");

    if (key == "seed") cfg.seed = parse_count(value, line_no, key);
    else if (key == "n_classes") cfg.n_classes = parse_count(value, line_no, key);
    else if (key == "n_context") cfg.n_context = parse_count(value, line_no, key);
    else if (key == "height") cfg.height = parse_count(value, line_no, key);
    else if (key == "width") cfg.width = parse_count(value, line_no, key);
    else if (key == "n_train") cfg.n_train = parse_count(value, line_no, key);
    else if (key == "n_val") cfg.n_val = parse_count(value, line_no, key);
    else if (key == "n_test") cfg.n_test = parse_count(value, line_no, key);
    else if (key == "n_envs") cfg.n_envs = parse_count(value, line_no, key);
    else if (key == "max_labels") cfg.max_labels = parse_count(value, line_no, key);
    else if (key == "batch_size") cfg.batch_size = parse_count(value, line_no, key);
    else if (key == "epochs") cfg.epochs = parse_count(value, line_no, key);
    else if (key == "lr") cfg.lr = parse_real(value, line_no, key);
    else if (key == "rho") cfg.rho = parse_real(value, line_no, key);
    else if (key == "method") {
      if (value == "codir") cfg.method = Method::kCodir;
      else if (value == "bxent") cfg.method = Method::kBxent;
      else fail(line_no, "method must be codir or bxent, got '" + value + "'");
    } else if (key == "env_source") {
      if (value == "class") cfg.env_source = EnvSource::kClass;
      else if (value == "context") cfg.env_source = EnvSource::kContext;
      else fail(line_no, "env_source must be class or context, got '" + value + "'");
    } else if (key == "bxent_head") {
      if (value == "single") cfg.bxent_head = HeadType::kBxentSingle;
      else if (value == "joint") cfg.bxent_head = HeadType::kBxentJoint;
      else fail(line_no, "bxent_head must be single or joint, got '" + value + "'");
    } else {
      fail(line_no, "unknown key '" + key + "'");
    }
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(cfg.n_classes >= 2 && cfg.n_classes <= 8, "n_classes must be in [2, 8]");
  require(cfg.n_context == 2 * cfg.n_classes + 8, "n_context must equal 2*n_classes + 8");
  require(cfg.height % 4 == 0 && cfg.width % 4 == 0 && cfg.height > 0 && cfg.width > 0,
          "height and width must be positive multiples of 4");
  require(cfg.n_train > 0 && cfg.n_val > 0 && cfg.n_test > 0, "split sizes must be positive");
  require(cfg.n_envs > 0, "n_envs must be positive");
  require(cfg.max_labels >= 1 && cfg.max_labels <= cfg.env_label_count(),
          "max_labels must be in [1, environment label pool size]");
  require(cfg.lr > 0.0, "lr must be positive");
  require(cfg.rho > 0.0, "rho must be positive");
  require(cfg.batch_size > 0, "batch_size must be positive");
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os << "seed = " << cfg.seed << '\n';
  os << "n_classes = " << cfg.n_classes << '\n';
  os << "n_context = " << cfg.n_context << '\n';
  os << "height = " << cfg.height << '\n';
  os << "width = " << cfg.width << '\n';
  os << "n_train = " << cfg.n_train << '\n';
  os << "n_val = " << cfg.n_val << '\n';
  os << "n_test = " << cfg.n_test << '\n';
  os << "n_envs = " << cfg.n_envs << '\n';
  os << "max_labels = " << cfg.max_labels << '\n';
  os << "method = " << (cfg.method == Method::kCodir ? "codir" : "bxent") << '\n';
  os << "env_source = " << (cfg.env_source == EnvSource::kClass ? "class" : "context") << '\n';
  os << "bxent_head = " << (cfg.bxent_head == HeadType::kBxentSingle ? "single" : "joint")
     << '\n';
  os << "lr = " << cfg.lr << '\n';
  os << "rho = " << cfg.rho << '\n';
  os << "batch_size = " << cfg.batch_size << '\n';
  os << "epochs = " << cfg.epochs << '\n';
  return os.str();
}

}  // namespace codir
