#include "ddn/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ddn/config.hpp"

namespace fs = std::filesystem;

namespace ddn {
namespace io {

namespace {

constexpr char kTensorMagic[4] = {'D', 'D', 'N', '1'};
constexpr int64_t kMaxElements = int64_t(1) << 34;

template <class T>
constexpr uint8_t element_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff),
                        (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff),
                        (unsigned char)((v >> 24) & 0xff)};
  out.write((const char*)b, 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read((char*)b, 4);
  require(in.gcount() == 4, "tensor read: truncated header");
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
         ((uint32_t)b[3] << 24);
}

template <class T>
void write_tensor_record(std::ostream& out, const Tensor<T>& t) {
  out.write(kTensorMagic, 4);
  const uint8_t code = element_code<T>();
  out.put((char)code);
  out.put((char)t.rank());
  for (int d : t.dims) put_u32(out, (uint32_t)d);
  // Little-endian host assumed; payload is written verbatim.
  out.write((const char*)t.ptr(), (std::streamsize)(t.size() * sizeof(T)));
  require(out.good(), "tensor write: stream failure");
}

template <class T>
Tensor<T> read_tensor_record(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kTensorMagic, 4) == 0,
          "tensor read: bad magic (expected DDN1)");
  const int code = in.get();
  const int rank = in.get();
  require(code == 0 || code == 1, "tensor read: unknown element code ", code);
  require(code == element_code<T>(), "tensor read: element code ", code,
          " does not match requested width");
  require(rank >= 1 && rank <= kMaxRank, "tensor read: rank ", rank,
          " outside 1..", kMaxRank);
  Shape dims(rank);
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(in);
    require(d > 0, "tensor read: zero extent in dim ", i);
    dims[i] = (int)d;
    n *= (int64_t)d;
    require(n <= kMaxElements, "tensor read: declared dims overflow (",
            n, " elements)");
  }
  Tensor<T> t(dims);
  const int64_t want = t.size() * (int64_t)sizeof(T);
  in.read((char*)t.ptr(), (std::streamsize)want);
  require(in.gcount() == want, "tensor read: truncated payload, expected ",
          want, " bytes, got ", in.gcount());
  return t;
}

std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  require(out.is_open(), "cannot open for writing: ", path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = true) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  require(in.is_open(), "cannot open for reading: ", path);
  return in;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  write_tensor_record(out, t);
}
void write_tensor(std::ostream& out, const Tensor<double>& t) {
  write_tensor_record(out, t);
}
void write_tensor(const std::string& path, const Tensor<float>& t) {
  auto out = open_out(path);
  write_tensor_record(out, t);
}
void write_tensor(const std::string& path, const Tensor<double>& t) {
  auto out = open_out(path);
  write_tensor_record(out, t);
}

template <class T>
Tensor<T> read_tensor(std::istream& in) {
  return read_tensor_record<T>(in);
}
template <class T>
Tensor<T> read_tensor(const std::string& path) {
  auto in = open_in(path);
  return read_tensor_record<T>(in);
}

template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template Tensor<float> read_tensor<float>(const std::string&);
template Tensor<double> read_tensor<double>(const std::string&);

// --- PGM ---------------------------------------------------------------

void write_pgm(const std::string& path, const Tensor<float>& image,
               int maxval) {
  require(image.rank() == 2 || (image.rank() == 3 && image.dim(0) == 1),
          "write_pgm: image must be [H,W] or [1,H,W], got ",
          shape_str(image.dims));
  require(maxval == 255 || maxval == 65535,
          "write_pgm: maxval must be 255 or 65535, got ", maxval);
  const int h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  auto out = open_out(path);
  out << "P5\n" << w << " " << h << "\n" << maxval << "\n";
  for (int64_t i = 0; i < image.size(); ++i) {
    double v = std::clamp((double)image[i], 0.0, 1.0);
    const long q = std::lround(v * maxval);
    if (maxval == 255) {
      out.put((char)(unsigned char)q);
    } else {
      out.put((char)(unsigned char)(q >> 8));  // big-endian, per the format
      out.put((char)(unsigned char)(q & 0xff));
    }
  }
  require(out.good(), "write_pgm: stream failure for ", path);
}

namespace {

// Next integer token, skipping whitespace and '#' comment lines.
int pgm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  require(c != EOF && std::isdigit(c), "read_pgm: malformed header in ", path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  require(c == EOF || std::isspace(c) || c == '#',
          "read_pgm: malformed header in ", path);
  if (c == '#') in.unget();
  return v;
}

}  // namespace

Tensor<float> read_pgm(const std::string& path) {
  auto in = open_in(path);
  char p = 0, five = 0;
  in.get(p);
  in.get(five);
  require(p == 'P' && five == '5', "read_pgm: not a binary PGM (P5): ", path);
  const int w = pgm_int(in, path);
  const int h = pgm_int(in, path);
  const int maxval = pgm_int(in, path);
  require(w > 0 && h > 0, "read_pgm: bad dimensions in ", path);
  require(maxval > 0 && maxval < 65536, "read_pgm: bad maxval in ", path);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw((size_t)w * h * bytes);
  in.read((char*)raw.data(), (std::streamsize)raw.size());
  require((size_t)in.gcount() == raw.size(),
          "read_pgm: truncated pixel data in ", path);
  Tensor<float> img({h, w});
  for (int64_t i = 0; i < img.size(); ++i) {
    const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
    img[i] = (float)v / (float)maxval;
  }
  return img;
}

// --- checkpoints ---------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "DDNCKPT1";

struct ManifestEntry {
  std::string name;
  Shape dims;
  int64_t offset = 0;
  int64_t bytes = 0;
};

}  // namespace

void validate_param_tree(const net::ParamTree<float>& params,
                         const net::ModelConfig& config, net::ModelKind kind) {
  auto expected = net::param_shapes(config, kind);
  std::vector<std::string> missing;
  for (const auto& [name, shape] : expected) {
    auto it = params.find(name);
    if (it == params.end()) {
      missing.push_back(name);
      continue;
    }
    require(it->second.dims == shape, "checkpoint: leaf '", name,
            "' has dims ", shape_str(it->second.dims), " but the config implies ",
            shape_str(shape));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail("checkpoint: missing parameter leaves: ", list);
  }
  for (const auto& [name, t] : params)
    require(expected.count(name), "checkpoint: unknown parameter leaf '",
            name, "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  validate_param_tree(ckpt.params, ckpt.config, ckpt.kind);
  for (const auto& [name, t] : ckpt.params)
    if (!t.all_finite())
      fail_numeric("checkpoint: non-finite values in leaf '", name, "'");

  // Tensor section: params in name order, then adam moments.
  std::vector<std::pair<std::string, const Tensor<float>*>> records;
  for (const auto& [name, t] : ckpt.params) records.push_back({name, &t});
  if (ckpt.adam) {
    for (const auto& [name, t] : ckpt.adam->m)
      records.push_back({"adam.m." + name, &t});
    for (const auto& [name, t] : ckpt.adam->v)
      records.push_back({"adam.v." + name, &t});
  }

  std::ostringstream head;
  head << kCheckpointMagic << "\n";
  head << "kind=" << net::model_kind_name(ckpt.kind) << "\n";
  head << "epoch=" << ckpt.epoch << "\n";
  head << "best_val=" << fmt_double(ckpt.best_val) << "\n";
  head << "adam_step=" << (ckpt.adam ? ckpt.adam->step : -1) << "\n";
  for (const auto& [key, value] : config::model_config_kv(ckpt.config))
    head << "config." << key << "=" << value << "\n";
  head << "tensors=" << records.size() << "\n";
  int64_t offset = 0;
  for (const auto& [name, t] : records) {
    const int64_t bytes =
        4 + 2 + 4 * (int64_t)t->rank() + t->size() * (int64_t)sizeof(float);
    head << name << " " << config::join_ints(t->dims) << " " << offset << " "
         << bytes << "\n";
    offset += bytes;
  }
  head << "payload\n";

  auto out = open_out(path);
  out << head.str();
  for (const auto& [name, t] : records) write_tensor_record(out, *t);
  require(out.good(), "checkpoint: stream failure for ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  require(std::getline(in, line) && line == kCheckpointMagic,
          "checkpoint: bad magic in ", path);

  Checkpoint ckpt;
  std::map<std::string, std::string> kv;
  std::vector<ManifestEntry> manifest;
  int64_t tensor_count = -1;
  while (std::getline(in, line)) {
    if (line == "payload") break;
    if (tensor_count < 0) {
      auto eq = line.find('=');
      require(eq != std::string::npos, "checkpoint: malformed header line '",
              line, "'");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "tensors") {
        tensor_count = std::stoll(value);
      } else {
        kv[key] = value;
      }
    } else {
      std::istringstream ls(line);
      ManifestEntry e;
      std::string dims;
      require((bool)(ls >> e.name >> dims >> e.offset >> e.bytes),
              "checkpoint: malformed manifest line '", line, "'");
      for (int d : config::parse_ints(dims)) e.dims.push_back(d);
      manifest.push_back(std::move(e));
    }
  }
  require(tensor_count >= 0 && (int64_t)manifest.size() == tensor_count,
          "checkpoint: manifest count mismatch in ", path);

  require(kv.count("kind"), "checkpoint: missing kind");
  ckpt.kind = kv["kind"] == "std2net" ? net::ModelKind::kStd2net
                                      : net::ModelKind::kSd2net;
  require(kv["kind"] == "sd2net" || kv["kind"] == "std2net",
          "checkpoint: unknown kind '", kv["kind"], "'");
  ckpt.epoch = std::stoi(kv.at("epoch"));
  ckpt.best_val = std::stod(kv.at("best_val"));
  const int64_t adam_step = std::stoll(kv.at("adam_step"));

  for (const auto& [key, value] : kv) {
    if (key.rfind("config.", 0) == 0)
      config::apply_model_key(ckpt.config, key.substr(7), value);
  }

  train::AdamState<float> adam;
  bool has_adam = adam_step >= 0;
  for (const auto& e : manifest) {
    Tensor<float> t = read_tensor_record<float>(in);
    require(t.dims == e.dims, "checkpoint: tensor '", e.name,
            "' dims disagree with manifest");
    if (e.name.rfind("adam.m.", 0) == 0) {
      adam.m.emplace(e.name.substr(7), std::move(t));
    } else if (e.name.rfind("adam.v.", 0) == 0) {
      adam.v.emplace(e.name.substr(7), std::move(t));
    } else {
      ckpt.params.emplace(e.name, std::move(t));
    }
  }
  validate_param_tree(ckpt.params, ckpt.config, ckpt.kind);
  if (has_adam) {
    adam.step = adam_step;
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

// --- datasets -------------------------------------------------------------

std::vector<scene::LabeledSample> Dataset::subset(
    const std::vector<int>& idx) const {
  std::vector<scene::LabeledSample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples.at(i));
  return out;
}

std::vector<scene::SequenceSample> Dataset::clip_subset(
    const std::vector<int>& idx) const {
  std::vector<scene::SequenceSample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(clips.at(i));
  return out;
}

namespace {

std::string index_name(int i, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*d", width, i);
  return buf;
}

Tensor<float> to_hw(const Tensor<float>& img) {
  if (img.rank() == 2) return img;
  return ops::reshape(img, {img.dim(1), img.dim(2)});
}

Tensor<float> mask_to_image(const Tensor<uint8_t>& mask) {
  Tensor<float> out(mask.dims);
  for (int64_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.f : 0.f;
  return out;
}

Tensor<uint8_t> image_to_mask(const Tensor<float>& img) {
  Tensor<uint8_t> out(img.dims);
  for (int64_t i = 0; i < img.size(); ++i) out[i] = img[i] >= 0.5f ? 1 : 0;
  return out;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "kind="
           << (ds.kind == DatasetKind::kSingle ? "single" : "sequence")
           << "\n";
  manifest << "count=" << ds.count() << "\n";
  if (ds.kind == DatasetKind::kSingle) {
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "masks");
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      const std::string id = index_name((int)i, 4);
      write_pgm((fs::path(dir) / "frames" / (id + ".pgm")).string(),
                to_hw(ds.samples[i].image), 65535);
      write_pgm((fs::path(dir) / "masks" / (id + ".pgm")).string(),
                mask_to_image(ds.samples[i].mask), 255);
    }
  } else {
    for (size_t c = 0; c < ds.clips.size(); ++c) {
      const fs::path clip_dir =
          fs::path(dir) / "clips" / index_name((int)c, 4);
      fs::create_directories(clip_dir / "frames");
      fs::create_directories(clip_dir / "masks");
      const auto& clip = ds.clips[c];
      for (size_t f = 0; f < clip.frames.size(); ++f) {
        const std::string id = index_name((int)f, 2);
        write_pgm((clip_dir / "frames" / (id + ".pgm")).string(),
                  to_hw(clip.frames[f]), 65535);
        write_pgm((clip_dir / "masks" / (id + ".pgm")).string(),
                  mask_to_image(clip.masks[f]), 255);
      }
      if (c == 0)
        manifest << "frames_per_clip=" << clip.frames.size() << "\n";
    }
  }
  manifest << "train=" << config::join_ints(ds.train_idx) << "\n";
  manifest << "test=" << config::join_ints(ds.test_idx) << "\n";
  write_text_file((fs::path(dir) / "manifest.txt").string(), manifest.str());
}

Dataset load_dataset(const std::string& dir) {
  const std::string manifest =
      read_text_file((fs::path(dir) / "manifest.txt").string());
  std::istringstream in(manifest);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, "dataset manifest: malformed line '",
            line, "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Dataset ds;
  require(kv.count("kind") && kv.count("count"),
          "dataset manifest: missing kind/count");
  ds.kind = kv["kind"] == "sequence" ? DatasetKind::kSequence
                                     : DatasetKind::kSingle;
  const int count = std::stoi(kv["count"]);
  ds.train_idx = config::parse_ints(kv.at("train"));
  ds.test_idx = config::parse_ints(kv.at("test"));

  if (ds.kind == DatasetKind::kSingle) {
    for (int i = 0; i < count; ++i) {
      const std::string id = index_name(i, 4);
      scene::LabeledSample s;
      Tensor<float> img =
          read_pgm((fs::path(dir) / "frames" / (id + ".pgm")).string());
      s.image = ops::reshape(img, {1, img.dim(0), img.dim(1)});
      s.mask = image_to_mask(
          read_pgm((fs::path(dir) / "masks" / (id + ".pgm")).string()));
      ds.samples.push_back(std::move(s));
    }
  } else {
    const int frames = std::stoi(kv.at("frames_per_clip"));
    for (int c = 0; c < count; ++c) {
      const fs::path clip_dir = fs::path(dir) / "clips" / index_name(c, 4);
      scene::SequenceSample clip;
      for (int f = 0; f < frames; ++f) {
        const std::string id = index_name(f, 2);
        Tensor<float> img =
            read_pgm((clip_dir / "frames" / (id + ".pgm")).string());
        clip.frames.push_back(ops::reshape(img, {1, img.dim(0), img.dim(1)}));
        clip.masks.push_back(image_to_mask(
            read_pgm((clip_dir / "masks" / (id + ".pgm")).string())));
      }
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

// --- misc -------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path, false);
  out << content;
  require(out.good(), "cannot write ", path);
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path, false);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_roc_points(const std::string& path,
                      const std::vector<metrics::RocPoint>& points) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& p : points) os << p.fpr << " " << p.tpr << "\n";
  write_text_file(path, os.str());
}

std::string format_epoch_log(const train::EpochLog& log) {
  std::ostringstream os;
  os << "epoch=" << log.epoch << " lr=" << fmt_double(log.lr)
     << " loss=" << fmt_double(log.loss)
     << " val_miou=" << fmt_double(log.val_miou);
  return os.str();
}

}  // namespace io
}  // namespace ddn
