#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

enum class LabelSchema { categorical, distribution, dimensional };

std::string schema_name(LabelSchema schema);

struct ManifestRecord {
  std::string path;        // resolved against the manifest's directory
  std::size_t class_id;    // categorical only
  std::vector<float> row;  // distribution: K probabilities; dimensional: {valence, arousal}
};

/// A dataset description: image paths plus one of the three label schemas,
/// loaded from a CSV whose header declares the schema:
///   path,class | path,p0,...,p{K-1} | path,valence,arousal
struct Manifest {
  LabelSchema schema = LabelSchema::categorical;
  std::size_t num_classes = 0; // K; 0 for dimensional
  std::vector<ManifestRecord> records;
  std::size_t size() const { return records.size(); }
};

Manifest load_manifest(const std::string& csv_path);

/// Decode a PNG/PPM/PGM image to [3,H,W] with values in [0,1].
/// Grayscale images are replicated across the three channels.
Tensor<float> load_image(const std::string& path);

void write_ppm(const std::string& path, const Tensor<float>& img);
void write_png(const std::string& path, const Tensor<float>& img);

/// Bilinear resample with half-pixel centers (align-corners off) and
/// edge-clamped sampling. Output values stay in [0,1] for [0,1] inputs.
Tensor<float> resize_bilinear(const Tensor<float>& img, std::size_t out_h, std::size_t out_w);

/// Resize to the network input size and clamp to [0,1]. Idempotent on
/// 128x128 [0,1] images.
Tensor<float> preprocess(const Tensor<float>& img);

/// Fully decoded, preprocessed dataset held in memory. Labels are stored as
/// training-ready rows: one-hot (categorical), the distribution itself, or
/// {valence, arousal}.
struct Dataset {
  LabelSchema schema = LabelSchema::categorical;
  std::size_t num_classes = 0;
  std::vector<Tensor<float>> images; // each [3,128,128]
  std::vector<std::vector<float>> labels;
  std::vector<std::string> paths;
  std::size_t size() const { return images.size(); }
  std::size_t label_width() const { return schema == LabelSchema::dimensional ? 2 : num_classes; }
};

Dataset load_dataset(const Manifest& manifest);

/// Stack dataset records `indices` into ([N,3,128,128], [N,label_width]).
void assemble_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                    Tensor<float>& images, Tensor<float>& labels);

/// One deterministic pass over a manifest in batches, decoding images
/// lazily. With shuffle the order is a seeded permutation; without, manifest
/// order. The last partial batch is emitted.
class BatchIterator {
public:
  BatchIterator(const Manifest& manifest, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  /// Fills the next batch; returns false when the pass is complete.
  bool next(Tensor<float>& images, Tensor<float>& labels,
            std::vector<std::size_t>* indices = nullptr);

private:
  const Manifest& manifest_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t at_ = 0;
};

} // namespace facechannel
