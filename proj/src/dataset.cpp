#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "facechannel/data.hpp"

namespace facechannel {

Tensor<float> resize_bilinear(const Tensor<float>& img, std::size_t out_h, std::size_t out_w) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("resize: expects [3,H,W], got " + shape_to_string(img.shape()));
  const std::size_t h = img.dim(1), w = img.dim(2);
  if (h < 2 || w < 2 || out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize: degenerate size " + std::to_string(h) + "x" +
                                std::to_string(w) + " -> " + std::to_string(out_h) + "x" +
                                std::to_string(out_w));
  if (h == out_h && w == out_w) return img;

  Tensor<float> out({3, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);

  auto clamp_idx = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::min<long>(std::max<long>(i, 0), static_cast<long>(n) - 1));
  };

  for (std::size_t y = 0; y < out_h; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const long y0 = static_cast<long>(std::floor(src_y));
    const double fy = src_y - static_cast<double>(y0);
    const std::size_t ya = clamp_idx(y0, h), yb = clamp_idx(y0 + 1, h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const long x0 = static_cast<long>(std::floor(src_x));
      const double fx = src_x - static_cast<double>(x0);
      const std::size_t xa = clamp_idx(x0, w), xb = clamp_idx(x0 + 1, w);
      for (std::size_t c = 0; c < 3; ++c) {
        const float* plane = img.data() + c * h * w;
        const double top = (1.0 - fx) * plane[ya * w + xa] + fx * plane[ya * w + xb];
        const double bot = (1.0 - fx) * plane[yb * w + xa] + fx * plane[yb * w + xb];
        const double v = (1.0 - fy) * top + fy * bot;
        out[c * out_h * out_w + y * out_w + x] =
            static_cast<float>(std::min(std::max(v, 0.0), 1.0));
      }
    }
  }
  return out;
}

Tensor<float> preprocess(const Tensor<float>& img) {
  Tensor<float> resized = resize_bilinear(img, 128, 128);
  for (auto& v : resized.values()) v = std::min(std::max(v, 0.0f), 1.0f);
  return resized;
}

namespace {

std::vector<float> label_row(const Manifest& m, const ManifestRecord& rec) {
  if (m.schema == LabelSchema::categorical) {
    std::vector<float> one_hot(m.num_classes, 0.0f);
    one_hot[rec.class_id] = 1.0f;
    return one_hot;
  }
  return rec.row;
}

} // namespace

Dataset load_dataset(const Manifest& manifest) {
  Dataset d;
  d.schema = manifest.schema;
  d.num_classes = manifest.num_classes;
  d.images.reserve(manifest.size());
  for (const auto& rec : manifest.records) {
    d.images.push_back(preprocess(load_image(rec.path)));
    d.labels.push_back(label_row(manifest, rec));
    d.paths.push_back(rec.path);
  }
  return d;
}

void assemble_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                    Tensor<float>& images, Tensor<float>& labels) {
  const std::size_t n = indices.size();
  const std::size_t lw = data.label_width();
  images = Tensor<float>({n, 3, 128, 128});
  labels = Tensor<float>({n, lw});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<float>& img = data.images.at(indices[i]);
    std::copy(img.data(), img.data() + img.size(), images.data() + i * img.size());
    const std::vector<float>& row = data.labels.at(indices[i]);
    std::copy(row.begin(), row.end(), labels.data() + i * lw);
  }
}

BatchIterator::BatchIterator(const Manifest& manifest, std::size_t batch_size, std::uint64_t seed,
                             bool shuffle)
    : manifest_(manifest), batch_size_(batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_iterator: batch_size must be >= 1");
  order_.resize(manifest.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order_.begin(), order_.end());
  }
}

bool BatchIterator::next(Tensor<float>& images, Tensor<float>& labels,
                         std::vector<std::size_t>* indices) {
  if (at_ >= order_.size()) return false;
  const std::size_t n = std::min(batch_size_, order_.size() - at_);
  const std::size_t lw =
      manifest_.schema == LabelSchema::dimensional ? 2 : manifest_.num_classes;
  images = Tensor<float>({n, 3, 128, 128});
  labels = Tensor<float>({n, lw});
  if (indices) indices->clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rec_idx = order_[at_ + i];
    const ManifestRecord& rec = manifest_.records[rec_idx];
    const Tensor<float> img = preprocess(load_image(rec.path));
    std::copy(img.data(), img.data() + img.size(), images.data() + i * img.size());
    std::vector<float> row = label_row(manifest_, rec);
    std::copy(row.begin(), row.end(), labels.data() + i * lw);
    if (indices) indices->push_back(rec_idx);
  }
  at_ += n;
  return true;
}

} // namespace facechannel
