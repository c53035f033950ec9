#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lexpol/net.hpp"

namespace lexpol {

struct TaskMetadata {
  std::string task_id;
  std::string text;  // e.g. "go to the red goal"
};

enum class ProviderTag { kHashed, kTable };

struct ContextEmbedding {
  VectorXd vector;
  ProviderTag provider_tag = ProviderTag::kHashed;
  bool head_applied = false;
};

/// task_id -> precomputed embedding, for users who bring offline language
/// model outputs. CSV format: header `task_id,dim_0,...`, one row per task,
/// floats printed with enough digits to round-trip exactly.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  void insert(const std::string& task_id, const VectorXd& v);
  bool has(const std::string& task_id) const;
  const VectorXd& at(const std::string& task_id) const;
  int dim() const { return d_raw_; }
  std::size_t size() const { return rows_.size(); }

  static EmbeddingTable load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

 private:
  std::map<std::string, VectorXd> rows_;
  int d_raw_ = 0;
};

/// Lowercases, splits on anything non-alphanumeric, maps each token to a
/// seeded unit vector in R^n, and returns the normalized bag-of-words sum.
/// Pure in (text, n, seed).
ContextEmbedding embed_hashed(const TaskMetadata& meta, int n, std::uint64_t seed);

ContextEmbedding embed_table(const TaskMetadata& meta, const EmbeddingTable& table);

std::vector<std::string> tokenize_lower(const std::string& text);

/// Uniform front end over the two providers so the agent does not care
/// which one a run configured.
class ContextProvider {
 public:
  static ContextProvider hashed(int n, std::uint64_t seed);
  static ContextProvider table(EmbeddingTable t);

  ContextEmbedding embed(const TaskMetadata& meta) const;
  int dim() const;
  ProviderTag tag() const { return tag_; }

 private:
  ProviderTag tag_ = ProviderTag::kHashed;
  int n_ = 0;
  std::uint64_t seed_ = 0;
  EmbeddingTable table_;
};

/// Trainable projection from the raw provider vector to z_context. With
/// stopgrad=true the downstream backward pass stops at the head's output,
/// so its parameters never move (Algorithm-line semantics); with false the
/// gradient flows through.
class ContextHead {
 public:
  ContextHead() = default;
  ContextHead(DenseNet net, bool stopgrad);

  /// Two dense layers, hidden width = out dim = n, relu hidden.
  static ContextHead make_default(int d_raw, int n, Rng& rng, bool stopgrad);

  ContextEmbedding apply(const ContextEmbedding& raw);
  MatrixXd apply_cols(const MatrixXd& raw_cols);  // cached, batched

  /// Backward from dL/dz. Returns dL/dz_raw; both the returned gradient
  /// and the tape deposit are zero when stopgrad is set.
  MatrixXd backward(const MatrixXd& grad_z);

  bool stopgrad() const { return stopgrad_; }
  void set_stopgrad(bool v) { stopgrad_ = v; }
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }
  int out_dim() const { return net_.output_dim(); }

 private:
  DenseNet net_;
  bool stopgrad_ = true;
};

}  // namespace lexpol
