#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lexpol/net.hpp"

namespace lexpol {

/// One named parameter group inside a checkpoint. Nets carry their layer
/// dims and activation tags so a reader can rebuild them without external
/// schema; scalars are single values (e.g. the entropy temperature).
struct FragmentInfo {
  std::string name;
  std::string kind;  // "net" or "scalar"
  std::vector<int> dims;
  std::vector<Activation> acts;
  std::uint64_t byte_offset = 0;
  std::uint64_t float_count = 0;
};

/// Checkpoint = plain-text manifest.txt plus params.blob holding the
/// fragments' float32 data concatenated in manifest order. Weights are
/// written row-major, little-endian. Round-trips bit-exactly.
class CheckpointWriter {
 public:
  void add_net(const std::string& name, const DenseNet& net);
  void add_scalar(const std::string& name, double value);

  void write(const std::filesystem::path& dir) const;

 private:
  struct Pending {
    FragmentInfo info;
    std::vector<float> data;
  };
  std::vector<Pending> frags_;

  void check_name(const std::string& name) const;
};

class Checkpoint {
 public:
  static Checkpoint load(const std::filesystem::path& dir);

  bool has(const std::string& name) const;
  const FragmentInfo& info(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Rebuilds the net from its manifest dims/activations.
  DenseNet read_net(const std::string& name) const;

  /// Loads into an existing net; shape or activation mismatch is a config
  /// error (the checkpoint does not fit the requested architecture).
  void read_net_into(const std::string& name, DenseNet& net) const;

  double read_scalar(const std::string& name) const;

 private:
  std::vector<FragmentInfo> infos_;
  std::vector<float> blob_;

  const FragmentInfo& require(const std::string& name) const;
  void fill_net(const FragmentInfo& fi, DenseNet& net) const;
};

}  // namespace lexpol
