#include "rwre/config.hpp"

#include "rwre/error.hpp"
#include "rwre/harness.hpp"

#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace rwre {

namespace {

std::size_t line_of(const toml::node& node) { return node.source().begin.line; }

class TableReader {
 public:
  TableReader(const toml::table& table, std::string path, std::string name)
      : table_(table), path_(std::move(path)), name_(std::move(name)) {}

  [[noreturn]] void fail(const toml::node& node, const std::string& what) const {
    throw ConfigError(path_, line_of(node), what);
  }
  [[noreturn]] void fail(const std::string& what) const { fail(table_, what); }

  bool has(std::string_view key) const { return table_.contains(key); }
  const toml::table& table() const { return table_; }

  const toml::node& require(std::string_view key) const {
    const toml::node* node = table_.get(key);
    if (!node) fail("[" + name_ + "] is missing required key '" + std::string(key) + "'");
    return *node;
  }

  double number(std::string_view key) const { return as_number(require(key), key); }
  double number(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::int64_t integer(std::string_view key) const {
    const toml::node& node = require(key);
    if (auto v = node.value_exact<std::int64_t>()) return *v;
    fail(node, "'" + std::string(key) + "' must be an integer");
  }
  std::int64_t integer(std::string_view key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::string string(std::string_view key) const {
    const toml::node& node = require(key);
    if (auto v = node.value_exact<std::string>()) return *v;
    fail(node, "'" + std::string(key) + "' must be a string");
  }

  std::vector<double> numbers(std::string_view key) const {
    const toml::node& node = require(key);
    const toml::array* arr = node.as_array();
    if (!arr) fail(node, "'" + std::string(key) + "' must be an array of numbers");
    std::vector<double> out;
    for (const toml::node& item : *arr) out.push_back(as_number(item, key));
    return out;
  }
  std::vector<double> numbers(std::string_view key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : fallback;
  }

  std::vector<std::int64_t> integers(std::string_view key) const {
    const toml::node& node = require(key);
    const toml::array* arr = node.as_array();
    if (!arr) fail(node, "'" + std::string(key) + "' must be an array of integers");
    std::vector<std::int64_t> out;
    for (const toml::node& item : *arr) {
      auto v = item.value_exact<std::int64_t>();
      if (!v) fail(item, "'" + std::string(key) + "' must contain integers only");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<std::vector<double>> matrix(std::string_view key) const {
    const toml::node& node = require(key);
    const toml::array* rows = node.as_array();
    if (!rows) fail(node, "'" + std::string(key) + "' must be an array of arrays");
    std::vector<std::vector<double>> out;
    for (const toml::node& row : *rows) {
      const toml::array* cells = row.as_array();
      if (!cells) fail(row, "'" + std::string(key) + "' rows must be arrays");
      std::vector<double> values;
      for (const toml::node& cell : *cells) values.push_back(as_number(cell, key));
      out.push_back(std::move(values));
    }
    return out;
  }

  const toml::table& subtable(std::string_view key) const {
    const toml::node& node = require(key);
    if (const toml::table* t = node.as_table()) return *t;
    fail(node, "'" + std::string(key) + "' must be a table");
  }

 private:
  double as_number(const toml::node& node, std::string_view key) const {
    if (auto v = node.value_exact<double>()) return *v;
    if (auto v = node.value_exact<std::int64_t>()) return static_cast<double>(*v);
    fail(node, "'" + std::string(key) + "' must be numeric");
  }

  const toml::table& table_;
  std::string path_;
  std::string name_;
};

toml::table parse_toml(std::string_view text, const std::string& source_path) {
  try {
    return toml::parse(text, source_path);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source_path, e.source().begin.line, std::string(e.description()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ModelConfig model_from_table(const TableReader& model) {
  ModelConfig cfg;
  cfg.parameterization = model.string("parameterization");
  cfg.epsilon = model.number("epsilon", kDefaultEpsilon);
  const auto& p = cfg.parameterization;
  if (p == "iid_two_values" || p == "two_state_chain") {
    const std::size_t dim = p == "iid_two_values" ? 1 : 2;
    cfg.support = model.numbers("support");
    cfg.lower = model.numbers("lower", std::vector<double>(dim, 0.01));
    cfg.upper = model.numbers("upper", std::vector<double>(dim, 0.99));
    if (cfg.support.size() != 2) model.fail(model.require("support"), p + " needs exactly two support values");
    if (cfg.lower.size() != dim || cfg.upper.size() != dim) {
      model.fail(p + " needs " + std::to_string(dim) + " lower and upper bounds");
    }
  } else if (p == "dna_unzipping" || p == "row_weights") {
    cfg.weight_lower = model.number("weight_lower", cfg.weight_lower);
    cfg.weight_upper = model.number("weight_upper", cfg.weight_upper);
    if (p == "dna_unzipping") {
      cfg.beta = model.number("beta");
      cfg.g1 = model.number("g1");
    } else {
      cfg.support = model.numbers("support");
      if (model.has("pattern")) cfg.pattern = model.matrix("pattern");
    }
  } else {
    model.fail(model.require("parameterization"), "unknown parameterization '" + p + "'");
  }
  try {
    (void)cfg.build();
  } catch (const Error& e) {
    model.fail(std::string("invalid model: ") + e.what());
  }
  return cfg;
}

}  // namespace

ParamSpace ModelConfig::build() const {
  auto vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  if (parameterization == "iid_two_values") {
    if (support.size() != 2 || lower.size() != 1 || upper.size() != 1) {
      throw InputError("iid_two_values needs two support values and one bound pair");
    }
    return preset_iid_two_values(support[0], support[1], lower[0], upper[0], epsilon);
  }
  if (parameterization == "two_state_chain") {
    if (support.size() != 2) throw InputError("two_state_chain needs two support values");
    return preset_two_state_chain(support[0], support[1], vec(lower), vec(upper), epsilon);
  }
  if (parameterization == "dna_unzipping") {
    return preset_dna_unzipping(beta, g1, weight_lower, weight_upper, epsilon);
  }
  if (parameterization == "row_weights") {
    const auto n = static_cast<Eigen::Index>(support.size());
    Matrix pat = Matrix::Ones(n, n);
    if (!pattern.empty()) {
      if (static_cast<Eigen::Index>(pattern.size()) != n) throw InputError("pattern has the wrong number of rows");
      for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(pattern[i].size()) != n) throw InputError("pattern row has the wrong length");
        for (Eigen::Index j = 0; j < n; ++j) pat(i, j) = pattern[i][j];
      }
    }
    return preset_row_weights(Support(support, epsilon), pat, weight_lower, weight_upper);
  }
  throw InputError("unknown parameterization '" + parameterization + "'");
}

std::vector<std::string> preset_model_names() {
  return {"two-state", "iid-two-values", "dna-unzipping"};
}

ModelConfig preset_model_config(std::string_view name) {
  ModelConfig cfg;
  if (name == "two-state") {
    cfg.parameterization = "two_state_chain";
    cfg.support = {0.4, 0.8};
    cfg.lower = {0.01, 0.01};
    cfg.upper = {0.99, 0.99};
  } else if (name == "iid-two-values") {
    cfg.parameterization = "iid_two_values";
    cfg.support = {0.7, 0.8};
    cfg.lower = {0.01};
    cfg.upper = {0.99};
  } else if (name == "dna-unzipping") {
    cfg.parameterization = "dna_unzipping";
    cfg.beta = 1.0;
    cfg.g1 = 3.0;
  } else {
    throw InputError("unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

ModelConfig parse_model_config(std::string_view text, const std::string& source_path) {
  const toml::table root = parse_toml(text, source_path);
  const TableReader reader(root, source_path, "root");
  return model_from_table(TableReader(reader.subtable("model"), source_path, "model"));
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  return parse_model_config(read_file(path), path.string());
}

ExperimentPlan parse_plan(std::string_view text, const std::string& source_path,
                          const std::filesystem::path& base_dir) {
  const toml::table root = parse_toml(text, source_path);
  const TableReader reader(root, source_path, "root");
  ExperimentPlan plan;
  if (reader.has("model_file")) {
    plan.model = load_model_config(base_dir / reader.string("model_file"));
  } else {
    plan.model = model_from_table(TableReader(reader.subtable("model"), source_path, "model"));
  }

  const TableReader exp(reader.subtable("experiment"), source_path, "experiment");
  const auto theta = exp.numbers("theta_star");
  plan.theta_star = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  plan.n_grid = exp.integers("n_grid");
  const auto replicates = exp.integer("replicates");
  if (replicates < 1) exp.fail(exp.require("replicates"), "replicates must be at least 1");
  plan.replicates = static_cast<std::size_t>(replicates);
  plan.gammas = exp.numbers("gammas", {});
  plan.master_seed = static_cast<std::uint64_t>(exp.integer("master_seed"));
  plan.threads = static_cast<std::size_t>(std::max<std::int64_t>(0, exp.integer("threads", 0)));
  plan.anchor = static_cast<std::size_t>(std::max<std::int64_t>(0, exp.integer("anchor", 0)));
  plan.max_steps_factor = static_cast<std::uint64_t>(
      std::max<std::int64_t>(1, exp.integer("max_steps_factor", kDefaultMaxStepsPerSite)));

  if (reader.has("optimizer")) {
    const TableReader opt(reader.subtable("optimizer"), source_path, "optimizer");
    plan.optimizer.max_iters = static_cast<int>(opt.integer("max_iters", plan.optimizer.max_iters));
    plan.optimizer.grad_tol = opt.number("grad_tol", plan.optimizer.grad_tol);
    plan.optimizer.n_starts = static_cast<int>(opt.integer("n_starts", plan.optimizer.n_starts));
    plan.optimizer.start_seed =
        static_cast<std::uint64_t>(opt.integer("start_seed", static_cast<std::int64_t>(plan.optimizer.start_seed)));
  }
  try {
    plan.validate();
  } catch (const Error& e) {
    exp.fail(std::string("invalid plan: ") + e.what());
  }
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  return parse_plan(read_file(path), path.string(), path.parent_path());
}

}  // namespace rwre
