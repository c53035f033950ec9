#include "lexpol/checkpoint.hpp"

#include <bit>
#include <cctype>
#include <fstream>
#include <sstream>

#include "lexpol/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace lexpol {

namespace {

constexpr const char* kMagic = "lexpol-ckpt v1";
constexpr const char* kManifestFile = "manifest.txt";
constexpr const char* kBlobFile = "params.blob";

// Row-major flatten of one net into float32.
std::vector<float> net_to_floats(const DenseNet& net) {
  std::vector<float> out;
  long total = net.param_count();
  out.reserve(static_cast<std::size_t>(total));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& W = net.weight(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        out.push_back(static_cast<float>(W(i, j)));
    const auto& b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      out.push_back(static_cast<float>(b(i)));
  }
  return out;
}

std::vector<int> net_dims(const DenseNet& net) {
  std::vector<int> dims;
  dims.push_back(net.input_dim());
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    dims.push_back(static_cast<int>(net.weight(l).rows()));
  return dims;
}

}  // namespace

void CheckpointWriter::check_name(const std::string& name) const {
  if (name.empty()) throw ConfigError("checkpoint fragment name is empty");
  for (char c : name)
    if (std::isspace(static_cast<unsigned char>(c)) || c == '/')
      throw ConfigError("checkpoint fragment name has whitespace or '/': " + name);
  for (const auto& f : frags_)
    if (f.info.name == name)
      throw ConfigError("duplicate checkpoint fragment: " + name);
}

void CheckpointWriter::add_net(const std::string& name, const DenseNet& net) {
  check_name(name);
  Pending p;
  p.info.name = name;
  p.info.kind = "net";
  p.info.dims = net_dims(net);
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    p.info.acts.push_back(net.activation(l));
  p.data = net_to_floats(net);
  p.info.float_count = p.data.size();
  frags_.push_back(std::move(p));
}

void CheckpointWriter::add_scalar(const std::string& name, double value) {
  check_name(name);
  Pending p;
  p.info.name = name;
  p.info.kind = "scalar";
  p.data.push_back(static_cast<float>(value));
  p.info.float_count = 1;
  frags_.push_back(std::move(p));
}

void CheckpointWriter::write(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint dir " + dir.string());

  std::ostringstream manifest;
  manifest << kMagic << '\n' << frags_.size() << '\n';
  std::uint64_t offset = 0;
  for (const auto& f : frags_) {
    manifest << f.info.name << ' ' << f.info.kind;
    if (f.info.kind == "net") {
      manifest << ' ' << f.info.dims.size();
      for (int d : f.info.dims) manifest << ' ' << d;
      for (auto a : f.info.acts) manifest << ' ' << to_string(a);
    }
    manifest << ' ' << offset << ' ' << f.info.float_count << '\n';
    offset += f.info.float_count * sizeof(float);
  }

  {
    std::ofstream mf(dir / kManifestFile);
    if (!mf) throw IoError("cannot write " + (dir / kManifestFile).string());
    mf << manifest.str();
    if (!mf) throw IoError("write failed on " + (dir / kManifestFile).string());
  }
  {
    std::ofstream bf(dir / kBlobFile, std::ios::binary);
    if (!bf) throw IoError("cannot write " + (dir / kBlobFile).string());
    for (const auto& f : frags_)
      bf.write(reinterpret_cast<const char*>(f.data.data()),
               static_cast<std::streamsize>(f.data.size() * sizeof(float)));
    if (!bf) throw IoError("write failed on " + (dir / kBlobFile).string());
  }
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream mf(dir / kManifestFile);
  if (!mf) throw IoError("missing checkpoint manifest in " + dir.string());
  std::string magic;
  std::getline(mf, magic);
  if (magic != kMagic)
    throw IoError("bad checkpoint magic in " + dir.string() + ": " + magic);
  std::size_t count = 0;
  mf >> count;

  Checkpoint ck;
  std::uint64_t expect_offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    FragmentInfo fi;
    mf >> fi.name >> fi.kind;
    if (fi.kind == "net") {
      std::size_t ndims = 0;
      mf >> ndims;
      fi.dims.resize(ndims);
      for (auto& d : fi.dims) mf >> d;
      for (std::size_t l = 0; l + 1 < ndims; ++l) {
        std::string tag;
        mf >> tag;
        fi.acts.push_back(activation_from_string(tag));
      }
    } else if (fi.kind != "scalar") {
      throw IoError("unknown checkpoint fragment kind: " + fi.kind);
    }
    mf >> fi.byte_offset >> fi.float_count;
    if (!mf) throw IoError("malformed checkpoint manifest in " + dir.string());
    if (fi.byte_offset != expect_offset)
      throw IoError("checkpoint manifest offsets are not contiguous");
    expect_offset += fi.float_count * sizeof(float);
    ck.infos_.push_back(std::move(fi));
  }

  std::ifstream bf(dir / kBlobFile, std::ios::binary | std::ios::ate);
  if (!bf) throw IoError("missing checkpoint blob in " + dir.string());
  const auto bytes = static_cast<std::uint64_t>(bf.tellg());
  if (bytes != expect_offset)
    throw IoError("checkpoint blob size mismatch in " + dir.string());
  ck.blob_.resize(bytes / sizeof(float));
  bf.seekg(0);
  bf.read(reinterpret_cast<char*>(ck.blob_.data()),
          static_cast<std::streamsize>(bytes));
  if (!bf) throw IoError("checkpoint blob read failed in " + dir.string());
  return ck;
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& fi : infos_)
    if (fi.name == name) return true;
  return false;
}

const FragmentInfo& Checkpoint::require(const std::string& name) const {
  for (const auto& fi : infos_)
    if (fi.name == name) return fi;
  throw ConfigError("checkpoint has no fragment named " + name);
}

const FragmentInfo& Checkpoint::info(const std::string& name) const {
  return require(name);
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& fi : infos_) out.push_back(fi.name);
  return out;
}

void Checkpoint::fill_net(const FragmentInfo& fi, DenseNet& net) const {
  std::size_t pos = fi.byte_offset / sizeof(float);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& W = net.weight(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        W(i, j) = static_cast<double>(blob_[pos++]);
    auto& b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b(i) = static_cast<double>(blob_[pos++]);
  }
}

DenseNet Checkpoint::read_net(const std::string& name) const {
  const FragmentInfo& fi = require(name);
  if (fi.kind != "net")
    throw ConfigError("checkpoint fragment " + name + " is not a net");
  DenseNet net(fi.dims, fi.acts);
  fill_net(fi, net);
  return net;
}

void Checkpoint::read_net_into(const std::string& name, DenseNet& net) const {
  const FragmentInfo& fi = require(name);
  if (fi.kind != "net")
    throw ConfigError("checkpoint fragment " + name + " is not a net");
  const std::vector<int> want = [&net] {
    std::vector<int> dims;
    dims.push_back(net.input_dim());
    for (std::size_t l = 0; l < net.num_layers(); ++l)
      dims.push_back(static_cast<int>(net.weight(l).rows()));
    return dims;
  }();
  if (fi.dims != want)
    throw ConfigError("checkpoint fragment " + name +
                      " does not match the requested architecture");
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    if (fi.acts[l] != net.activation(l))
      throw ConfigError("checkpoint fragment " + name +
                        " has different activations");
  fill_net(fi, net);
}

double Checkpoint::read_scalar(const std::string& name) const {
  const FragmentInfo& fi = require(name);
  if (fi.kind != "scalar")
    throw ConfigError("checkpoint fragment " + name + " is not a scalar");
  return static_cast<double>(blob_[fi.byte_offset / sizeof(float)]);
}

}  // namespace lexpol
