#include <cstdio>
#include "pourmon/persist.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace pourmon {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

constexpr std::array<char, 5> kSequenceMagic = {'P', 'O', 'U', 'R', '1'};
constexpr std::array<char, 8> kCheckpointMagic = {'P', 'M', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr const char* kManifestHeader = "# pourmon-manifest 1";

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& is, fs::path path) : is_(is), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) fail("truncated file");
    return v;
  }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated file");
    return s;
  }

  [[noreturn]] void fail(const std::string& why) const { throw FormatError(path_.string() + ": " + why); }

 private:
  std::istream& is_;
  fs::path path_;
};

/// Writes through a sibling temp file and renames into place.
template <typename Fn>
void write_atomically(const fs::path& path, Fn&& body) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError(path.string() + ": cannot open for writing");
    body(os);
    os.flush();
    if (!os) throw FormatError(path.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '\t')) out.push_back(cell);
  return out;
}

int to_int(const std::string& s, const fs::path& file, const char* what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(file.string() + ": bad " + what + " '" + s + "'");
  }
}

Parameter named(const std::string& name, const Matrix& m) { return {name, m}; }

}  // namespace

// ---------------------------------------------------------------------------

void write_sequence_file(const Sequence& seq, const fs::path& path) {
  if (seq.frames.empty()) throw std::invalid_argument("write_sequence_file: empty sequence " + seq.id);
  const auto d = static_cast<std::int32_t>(seq.frames.front().feature.size());
  const auto n = static_cast<std::int32_t>(seq.frames.front().imu.samples.rows());
  write_atomically(path, [&](std::ostream& os) {
    os.write(kSequenceMagic.data(), kSequenceMagic.size());
    put<std::int32_t>(os, static_cast<std::int32_t>(seq.frames.size()));
    put<std::int32_t>(os, d);
    put<std::int32_t>(os, n);
    for (const auto& f : seq.frames) {
      for (Eigen::Index k = 0; k < d; ++k) put<float>(os, static_cast<float>(f.feature(k)));
      for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < 6; ++k) put<float>(os, static_cast<float>(f.imu.samples(i, k)));
      const auto x = f.pose.packed();
      for (int k = 0; k < 6; ++k) put<float>(os, static_cast<float>(x(k)));
    }
  });
}

std::vector<Frame> read_sequence_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open");
  Reader r(is, path);
  if (r.bytes(kSequenceMagic.size()) != std::string(kSequenceMagic.data(), kSequenceMagic.size()))
    r.fail("bad magic (expected POUR1)");
  const auto t = r.get<std::int32_t>();
  const auto d = r.get<std::int32_t>();
  const auto n = r.get<std::int32_t>();
  if (t < 2 || d < 1 || n < 1) r.fail("invalid header T=" + std::to_string(t) + " d_img=" + std::to_string(d) +
                                      " N=" + std::to_string(n));
  std::vector<Frame> frames(static_cast<std::size_t>(t));
  for (auto& f : frames) {
    f.feature.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) f.feature(k) = r.get<float>();
    f.imu.samples.resize(n, 6);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < 6; ++k) f.imu.samples(i, k) = r.get<float>();
    Eigen::Matrix<double, 6, 1> x;
    for (int k = 0; k < 6; ++k) x(k) = r.get<float>();
    f.pose = Pose::from_packed(x);
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after payload");
  return frames;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "seq");
  std::ostringstream manifest;
  manifest << kManifestHeader << '\n'
           << "# id\tuser\tcontainer\talpha\tbeta\ttrial\tlabel\tT\tspill_onset\tpath\n";
  for (const auto& s : data.sequences) {
    const std::string rel = "seq/" + s.id + ".pour";
    write_sequence_file(s, dir / rel);
    manifest << s.id << '\t' << s.user << '\t' << s.state.container_letter() << '\t' << s.state.alpha << '\t'
             << s.state.beta << '\t' << s.trial << '\t' << to_string(s.label) << '\t' << s.length() << '\t'
             << (s.spill_onset ? std::to_string(*s.spill_onset) : "-") << '\t' << rel << '\n';
  }
  write_atomically(dir / "manifest.tsv", [&](std::ostream& os) { os << manifest.str(); });
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.tsv";
  std::ifstream is(mpath);
  if (!is) throw FormatError(mpath.string() + ": cannot open");
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader)
    throw FormatError(mpath.string() + ": missing or unsupported manifest header");

  Dataset data;
  std::set<std::string> ids;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 10)
      throw FormatError(mpath.string() + ":" + std::to_string(lineno) + ": expected 10 columns, got " +
                        std::to_string(cells.size()));
    Sequence s;
    s.id = cells[0];
    if (!ids.insert(s.id).second) throw FormatError(mpath.string() + ": duplicate id " + s.id);
    s.user = to_int(cells[1], mpath, "user");
    if (cells[2].size() != 1 || cells[2][0] < 'b' || cells[2][0] > 'e')
      throw FormatError(mpath.string() + ": bad container '" + cells[2] + "'");
    s.state.container = cells[2][0] - 'b';
    s.state.alpha = to_int(cells[3], mpath, "alpha");
    s.state.beta = to_int(cells[4], mpath, "beta");
    try {
      initial_state_index(s.state);
    } catch (const std::exception& e) {
      throw FormatError(mpath.string() + ": " + s.id + ": " + e.what());
    }
    s.trial = to_int(cells[5], mpath, "trial");
    if (cells[6] == "success")
      s.label = Label::success;
    else if (cells[6] == "failure")
      s.label = Label::failure;
    else
      throw FormatError(mpath.string() + ": bad label '" + cells[6] + "'");
    const int t = to_int(cells[7], mpath, "T");
    if (cells[8] != "-") s.spill_onset = to_int(cells[8], mpath, "spill_onset");
    const fs::path file = dir / cells[9];
    s.frames = read_sequence_file(file);
    if (s.length() != t)
      throw FormatError(file.string() + ": holds " + std::to_string(s.length()) + " frames, manifest says " +
                        std::to_string(t));
    data.sequences.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> checkpoint_metadata(const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  const auto& m = c.model;
  return {
      {"variant", to_string(c.variant)},
      {"encoder", to_string(m.encoder)},
      {"feature_dim", std::to_string(m.feature_dim)},
      {"imu_samples", std::to_string(m.imu_samples)},
      {"img_hidden", std::to_string(m.img_hidden)},
      {"pos_hidden", std::to_string(m.pos_hidden)},
      {"rot_hidden", std::to_string(m.rot_hidden)},
      {"fuse_hidden", std::to_string(m.fuse_hidden)},
      {"gen_width", std::to_string(m.gen_width)},
      {"disc_width", std::to_string(m.disc_width)},
      {"monitor_width", std::to_string(m.monitor_width)},
      {"num_classes", std::to_string(m.num_classes)},
      {"lambda", fmt_double(c.lambda)},
      {"learning_rate", fmt_double(c.learning_rate)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"clip_norm", fmt_double(c.clip_norm)},
      {"aux_success_only", c.aux_success_only ? "1" : "0"},
      {"scheme", ckpt.fold.scheme},
      {"holdout", ckpt.fold.holdout},
      {"aggregation", "mean-probability"},
      {"position_error", "mean-euclidean"},
  };
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  std::ostringstream meta;
  for (const auto& [k, v] : checkpoint_metadata(ckpt)) meta << k << '=' << v << '\n';
  const std::string text = meta.str();

  std::vector<Parameter> tensors;
  for (const auto* p : ckpt.params.all()) tensors.push_back(*p);
  const auto& norm = ckpt.params.norm;
  tensors.push_back(named("norm.feature_mean", norm.feature_mean));
  tensors.push_back(named("norm.feature_scale", norm.feature_scale));
  tensors.push_back(named("norm.imu_mean", norm.imu_mean));
  tensors.push_back(named("norm.imu_scale", norm.imu_scale));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_atomically(path, [&](std::ostream& os) {
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rows()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.cols()));
      for (Eigen::Index i = 0; i < t.value.size(); ++i) put<double>(os, t.value(i));
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.log.size()));
    for (const auto& l : ckpt.log)
      for (double v : {l.regression, l.adversarial, l.generator, l.discriminator, l.classification, l.monitoring,
                       l.lambda})
        put<double>(os, v);
  });
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open");
  Reader r(is, path);
  if (r.bytes(kCheckpointMagic.size()) != std::string(kCheckpointMagic.data(), kCheckpointMagic.size()))
    r.fail("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    r.fail("checkpoint format version " + std::to_string(version) + " is not supported (reader handles " +
           std::to_string(kCheckpointVersion) + ")");

  std::map<std::string, std::string> meta;
  {
    std::istringstream text(r.bytes(r.get<std::uint32_t>()));
    std::string line;
    while (std::getline(text, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) r.fail("malformed configuration line '" + line + "'");
      meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) r.fail("configuration echo lacks '" + key + "'");
    return it->second;
  };
  auto int_field = [&](const std::string& key) { return to_int(field(key), path, key.c_str()); };

  Checkpoint ckpt{TrainConfig{}, ModelParams(ModelConfig{}), FoldTag{}, {}};
  try {
    auto& c = ckpt.config;
    c.variant = parse_variant(field("variant"));
    c.model.encoder = parse_encoder(field("encoder"));
    c.model.feature_dim = int_field("feature_dim");
    c.model.imu_samples = int_field("imu_samples");
    c.model.img_hidden = int_field("img_hidden");
    c.model.pos_hidden = int_field("pos_hidden");
    c.model.rot_hidden = int_field("rot_hidden");
    c.model.fuse_hidden = int_field("fuse_hidden");
    c.model.gen_width = int_field("gen_width");
    c.model.disc_width = int_field("disc_width");
    c.model.monitor_width = int_field("monitor_width");
    c.model.num_classes = int_field("num_classes");
    c.lambda = std::stod(field("lambda"));
    c.learning_rate = std::stod(field("learning_rate"));
    c.batch_size = int_field("batch_size");
    c.epochs = int_field("epochs");
    c.seed = std::stoull(field("seed"));
    c.clip_norm = std::stod(field("clip_norm"));
    c.aux_success_only = field("aux_success_only") == "1";
    ckpt.fold.scheme = field("scheme");
    ckpt.fold.holdout = field("holdout");
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(std::string("bad configuration echo: ") + e.what());
  }

  ckpt.params = ModelParams(ckpt.config.model);
  std::map<std::string, Matrix*> slots;
  for (auto* p : ckpt.params.all()) slots[p->name] = &p->value;
  Matrix feature_mean, feature_scale, imu_mean, imu_scale;
  slots["norm.feature_mean"] = &feature_mean;
  slots["norm.feature_scale"] = &feature_scale;
  slots["norm.imu_mean"] = &imu_mean;
  slots["norm.imu_scale"] = &imu_scale;
  const std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> norm_shapes = {
      {"norm.feature_mean", {ckpt.config.model.feature_dim, 1}},
      {"norm.feature_scale", {ckpt.config.model.feature_dim, 1}},
      {"norm.imu_mean", {6, 1}},
      {"norm.imu_scale", {6, 1}}};

  const auto count = r.get<std::uint32_t>();
  if (count != slots.size())
    r.fail("holds " + std::to_string(count) + " tensors, configuration implies " + std::to_string(slots.size()));
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    auto it = slots.find(name);
    if (it == slots.end()) r.fail("unexpected tensor '" + name + "'");
    if (!seen.insert(name).second) r.fail("duplicate tensor '" + name + "'");
    Matrix& dst = *it->second;
    Eigen::Index er = dst.rows(), ec = dst.cols();
    if (auto ns = norm_shapes.find(name); ns != norm_shapes.end()) std::tie(er, ec) = ns->second;
    if (rows != er || cols != ec)
      r.fail("tensor '" + name + "' is " + nc::shape_str(rows, cols) + ", configuration expects " +
             nc::shape_str(er, ec));
    dst.resize(rows, cols);
    for (Eigen::Index i = 0; i < dst.size(); ++i) dst(i) = r.get<double>();
  }
  ckpt.params.norm.feature_mean = feature_mean.col(0);
  ckpt.params.norm.feature_scale = feature_scale.col(0);
  ckpt.params.norm.imu_mean = imu_mean.col(0);
  ckpt.params.norm.imu_scale = imu_scale.col(0);

  const auto epochs = r.get<std::uint32_t>();
  for (std::uint32_t e = 0; e < epochs; ++e) {
    LossBundle l;
    for (double* v : {&l.regression, &l.adversarial, &l.generator, &l.discriminator, &l.classification,
                      &l.monitoring, &l.lambda})
      *v = r.get<double>();
    ckpt.log.push_back(l);
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after payload");
  return ckpt;
}

}  // namespace pourmon
