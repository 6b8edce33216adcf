#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddn/metrics.hpp"
#include "ddn/network.hpp"
#include "ddn/scene.hpp"
#include "ddn/training.hpp"

// On-disk formats. The tensor container ("DDN1") is bit-exact: magic,
// element code (0=f32, 1=f64), rank, little-endian u32 dims, then the
// row-major little-endian payload. Checkpoints bundle named tensor records
// behind a text manifest. Images travel as binary PGM (P5).

namespace ddn {
namespace io {

// --- tensor records -------------------------------------------------------

void write_tensor(std::ostream& out, const Tensor<float>& t);
void write_tensor(std::ostream& out, const Tensor<double>& t);
void write_tensor(const std::string& path, const Tensor<float>& t);
void write_tensor(const std::string& path, const Tensor<double>& t);

// Reads one record; the element code must match T (0 for float, 1 for
// double) or the read fails.
template <class T>
Tensor<T> read_tensor(std::istream& in);
template <class T>
Tensor<T> read_tensor(const std::string& path);

// --- PGM (binary P5) -------------------------------------------------------

// Image values in [0,1]; maxval 255 writes one byte per pixel, 65535 two
// (big-endian, per the format).
void write_pgm(const std::string& path, const Tensor<float>& image,
               int maxval = 255);
Tensor<float> read_pgm(const std::string& path);

// --- checkpoints -----------------------------------------------------------

struct Checkpoint {
  net::ParamTree<float> params;
  net::ModelConfig config;
  net::ModelKind kind = net::ModelKind::kSd2net;
  int epoch = 0;           // completed epochs
  double best_val = -1.0;
  std::optional<train::AdamState<float>> adam;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Confirms the tree matches the layout implied by (config, kind): every
// expected leaf present with the right dims, nothing extra.
void validate_param_tree(const net::ParamTree<float>& params,
                         const net::ModelConfig& config, net::ModelKind kind);

// --- datasets ---------------------------------------------------------------

enum class DatasetKind { kSingle, kSequence };

struct Dataset {
  DatasetKind kind = DatasetKind::kSingle;
  std::vector<scene::LabeledSample> samples;     // single-frame
  std::vector<scene::SequenceSample> clips;      // sequence
  std::vector<int> train_idx;
  std::vector<int> test_idx;

  size_t count() const {
    return kind == DatasetKind::kSingle ? samples.size() : clips.size();
  }
  std::vector<scene::LabeledSample> subset(const std::vector<int>& idx) const;
  std::vector<scene::SequenceSample> clip_subset(
      const std::vector<int>& idx) const;
};

// Layout: frames/NNNN.pgm + masks/NNNN.pgm, or clips/CCCC/frames/NN.pgm +
// clips/CCCC/masks/NN.pgm, plus manifest.txt carrying the split.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// --- misc -------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

void write_roc_points(const std::string& path,
                      const std::vector<metrics::RocPoint>& points);

std::string format_epoch_log(const train::EpochLog& log);

}  // namespace io
}  // namespace ddn
