#include "lexpol/context.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lexpol/errors.hpp"
#include "lexpol/rng.hpp"

namespace lexpol {

std::vector<std::string> tokenize_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

ContextEmbedding embed_hashed(const TaskMetadata& meta, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("embed_hashed: n must be >= 1");
  const auto tokens = tokenize_lower(meta.text);
  if (tokens.empty())
    throw ConfigError("task " + meta.task_id + " has metadata with no tokens");

  VectorXd sum = VectorXd::Zero(n);
  for (const auto& tok : tokens) {
    Rng rng = make_stream(seed, "ctx-token", fnv1a64(tok));
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal01(rng);
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    sum += v;
  }
  const double norm = sum.norm();
  if (norm > 1e-12) sum /= norm;

  ContextEmbedding out;
  out.vector = std::move(sum);
  out.provider_tag = ProviderTag::kHashed;
  out.head_applied = false;
  return out;
}

ContextEmbedding embed_table(const TaskMetadata& meta, const EmbeddingTable& table) {
  ContextEmbedding out;
  out.vector = table.at(meta.task_id);
  out.provider_tag = ProviderTag::kTable;
  out.head_applied = false;
  return out;
}

void EmbeddingTable::insert(const std::string& task_id, const VectorXd& v) {
  if (v.size() == 0) throw ConfigError("embedding table rows must be non-empty");
  if (d_raw_ == 0)
    d_raw_ = static_cast<int>(v.size());
  else if (v.size() != d_raw_)
    throw ConfigError("embedding table rows must share one dimension");
  rows_[task_id] = v;
}

bool EmbeddingTable::has(const std::string& task_id) const {
  return rows_.count(task_id) > 0;
}

const VectorXd& EmbeddingTable::at(const std::string& task_id) const {
  auto it = rows_.find(task_id);
  if (it == rows_.end())
    throw ConfigError("embedding table has no entry for task " + task_id);
  return it->second;
}

EmbeddingTable EmbeddingTable::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw IoError("embedding table is empty: " + path.string());
  // Header gives the dimension; cell values are what matter.
  std::size_t cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  if (cols < 2) throw IoError("embedding table header needs task_id plus dims");

  EmbeddingTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ','))
      throw IoError("bad embedding table row at line " + std::to_string(lineno));
    const std::string id = cell;
    VectorXd v(static_cast<Eigen::Index>(cols - 1));
    for (std::size_t i = 0; i + 1 < cols; ++i) {
      if (!std::getline(row, cell, ','))
        throw IoError("short embedding table row at line " + std::to_string(lineno));
      try {
        v(static_cast<Eigen::Index>(i)) = std::stod(cell);
      } catch (const std::exception&) {
        throw IoError("bad float '" + cell + "' at line " + std::to_string(lineno));
      }
    }
    table.insert(id, v);
  }
  return table;
}

void EmbeddingTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding table " + path.string());
  out << "task_id";
  for (int i = 0; i < d_raw_; ++i) out << ",dim_" << i;
  out << '\n';
  out.precision(17);
  for (const auto& [id, v] : rows_) {
    out << id;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v(i);
    out << '\n';
  }
  if (!out) throw IoError("write failed on " + path.string());
}

ContextProvider ContextProvider::hashed(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("hashed provider needs n >= 1");
  ContextProvider p;
  p.tag_ = ProviderTag::kHashed;
  p.n_ = n;
  p.seed_ = seed;
  return p;
}

ContextProvider ContextProvider::table(EmbeddingTable t) {
  if (t.size() == 0) throw ConfigError("table provider needs a non-empty table");
  ContextProvider p;
  p.tag_ = ProviderTag::kTable;
  p.n_ = t.dim();
  p.table_ = std::move(t);
  return p;
}

ContextEmbedding ContextProvider::embed(const TaskMetadata& meta) const {
  if (tag_ == ProviderTag::kHashed) return embed_hashed(meta, n_, seed_);
  return embed_table(meta, table_);
}

int ContextProvider::dim() const { return n_; }

ContextHead::ContextHead(DenseNet net, bool stopgrad)
    : net_(std::move(net)), stopgrad_(stopgrad) {}

ContextHead ContextHead::make_default(int d_raw, int n, Rng& rng, bool stopgrad) {
  DenseNet net = DenseNet::make_mlp(d_raw, {n}, n, Activation::kRelu);
  net.init_uniform_fanin(rng);
  return ContextHead(std::move(net), stopgrad);
}

ContextEmbedding ContextHead::apply(const ContextEmbedding& raw) {
  ContextEmbedding out;
  out.vector = net_.forward(MatrixXd(raw.vector)).col(0);
  out.provider_tag = raw.provider_tag;
  out.head_applied = true;
  return out;
}

MatrixXd ContextHead::apply_cols(const MatrixXd& raw_cols) {
  return net_.forward(raw_cols);
}

MatrixXd ContextHead::backward(const MatrixXd& grad_z) {
  if (stopgrad_) return MatrixXd::Zero(net_.input_dim(), grad_z.cols());
  return net_.backward(grad_z, true);
}

}  // namespace lexpol
