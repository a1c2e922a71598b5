#include "omcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "omcl/metrics.hpp"
#include "omcl/npy.hpp"

namespace fs = std::filesystem;

namespace omcl {

namespace {

ImageDataset assemble(NpyArray images, NpyArray labels, const std::string& split,
                      const std::string& origin) {
  if (images.dtype != NpyArray::Dtype::u8)
    throw DataError(origin + ": images must be uint8");
  ImageDataset ds;
  if (images.shape.size() == 3) {
    ds.count = images.shape[0];
    ds.h = static_cast<int>(images.shape[1]);
    ds.w = static_cast<int>(images.shape[2]);
    ds.ch = 1;
  } else if (images.shape.size() == 4) {
    ds.count = images.shape[0];
    ds.h = static_cast<int>(images.shape[1]);
    ds.w = static_cast<int>(images.shape[2]);
    ds.ch = static_cast<int>(images.shape[3]);
  } else {
    throw DataError(origin + ": images must be (N,H,W) or (N,H,W,C)");
  }
  ds.pixels = std::move(images.u8);
  ds.labels = labels.as_int_vector();
  ds.tag = split;
  if (static_cast<int64_t>(ds.labels.size()) != ds.count)
    throw DataError(origin + ": " + std::to_string(ds.count) + " images but " +
                    std::to_string(ds.labels.size()) + " labels");
  for (int lab : ds.labels) {
    if (lab < 0) throw DataError(origin + ": negative class label");
    ds.num_classes = std::max(ds.num_classes, lab + 1);
  }
  return ds;
}

}  // namespace

ImageDataset load_dataset(const std::string& path, const std::string& split) {
  const std::string img_key = split + "_images";
  const std::string lab_key = split + "_labels";
  if (fs::is_directory(path)) {
    const std::string img_path = path + "/" + img_key + ".npy";
    const std::string lab_path = path + "/" + lab_key + ".npy";
    return assemble(load_npy(img_path), load_npy(lab_path), split, path);
  }
  if (fs::exists(path)) {
    return assemble(load_npz_member(path, img_key), load_npz_member(path, lab_key),
                    split, path);
  }
  throw DataError("dataset path does not exist: " + path);
}

int OpenSetSplit::remap(int original) const {
  for (size_t i = 0; i < known.size(); ++i)
    if (known[i] == original) return static_cast<int>(i) + 1;
  return kUnknownClass;
}

int OpenSetSplit::unmap(int model_class) const {
  if (model_class < 1 || model_class > static_cast<int>(known.size()))
    throw Error("unmap: model class " + std::to_string(model_class) + " out of 1.." +
                std::to_string(known.size()));
  return known[static_cast<size_t>(model_class) - 1];
}

std::vector<OpenSetSplit> make_splits(int c_total, int k, uint64_t master_seed,
                                      const std::vector<int>& pinned) {
  if (c_total < 2) throw Error("make_splits: need at least two classes");
  if (k < 1) throw Error("make_splits: need at least one trial");
  const int n_known = (c_total + 1) / 2;
  if (static_cast<int>(pinned.size()) > n_known)
    throw Error("make_splits: " + std::to_string(pinned.size()) +
                " pinned classes do not fit a known set of " + std::to_string(n_known));
  for (int p : pinned)
    if (p < 0 || p >= c_total)
      throw Error("make_splits: pinned class " + std::to_string(p) + " out of range");

  std::vector<OpenSetSplit> splits;
  splits.reserve(static_cast<size_t>(k));
  for (int trial = 0; trial < k; ++trial) {
    std::vector<int> pool;
    for (int c = 0; c < c_total; ++c)
      if (std::find(pinned.begin(), pinned.end(), c) == pinned.end()) pool.push_back(c);
    Rng rng(master_seed, "splits", static_cast<uint64_t>(trial));
    rng.shuffle(pool);

    OpenSetSplit s;
    s.trial = trial;
    s.master_seed = master_seed;
    s.pinned = pinned;
    s.known = pinned;
    for (int i = 0; i < n_known - static_cast<int>(pinned.size()); ++i)
      s.known.push_back(pool[static_cast<size_t>(i)]);
    std::sort(s.known.begin(), s.known.end());
    for (int c = 0; c < c_total; ++c)
      if (std::find(s.known.begin(), s.known.end(), c) == s.known.end())
        s.unknown.push_back(c);
    splits.push_back(std::move(s));
  }
  return splits;
}

std::string splits_to_json(const SplitFile& file) {
  nlohmann::json j;
  j["dataset"] = file.dataset;
  j["master_seed"] = file.master_seed;
  j["trials"] = nlohmann::json::array();
  for (const auto& s : file.trials) {
    nlohmann::json t;
    t["k"] = s.trial;
    t["known"] = s.known;
    t["unknown"] = s.unknown;
    t["pinned"] = s.pinned;
    nlohmann::json label_map = nlohmann::json::object();
    for (size_t i = 0; i < s.known.size(); ++i)
      label_map[std::to_string(s.known[i])] = static_cast<int>(i) + 1;
    t["label_map"] = label_map;
    j["trials"].push_back(std::move(t));
  }
  return j.dump(2);
}

SplitFile splits_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SplitFile file;
  file.dataset = j.at("dataset").get<std::string>();
  file.master_seed = j.at("master_seed").get<uint64_t>();
  for (const auto& t : j.at("trials")) {
    OpenSetSplit s;
    s.trial = t.at("k").get<int>();
    s.known = t.at("known").get<std::vector<int>>();
    s.unknown = t.at("unknown").get<std::vector<int>>();
    if (t.contains("pinned")) s.pinned = t.at("pinned").get<std::vector<int>>();
    s.master_seed = file.master_seed;
    file.trials.push_back(std::move(s));
  }
  return file;
}

void save_splits(const std::string& path, const SplitFile& file) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << splits_to_json(file) << '\n';
}

SplitFile load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return splits_from_json_text(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid split file: " + e.what());
  }
}

ChannelStats compute_channel_stats(const ImageDataset& train,
                                   const std::vector<int>& known_ids) {
  ChannelStats st;
  st.mean.assign(static_cast<size_t>(train.ch), 0.0);
  st.stddev.assign(static_cast<size_t>(train.ch), 0.0);
  int64_t n_pixels = 0;
  for (int64_t i = 0; i < train.count; ++i) {
    if (std::find(known_ids.begin(), known_ids.end(), train.labels[i]) ==
        known_ids.end())
      continue;
    const uint8_t* img = train.image(i);
    // raw integer sums stay exact in a double, so constant channels come
    // out with a mean identical to the per-pixel scaling used later
    for (int64_t p = 0; p < train.image_size(); p += train.ch)
      for (int c = 0; c < train.ch; ++c)
        st.mean[static_cast<size_t>(c)] += img[p + c];
    n_pixels += train.image_size() / train.ch;
  }
  if (n_pixels == 0) throw DataError("channel stats: no known-class training images");
  for (auto& m : st.mean) m = m / static_cast<double>(n_pixels) / 255.0;
  for (int64_t i = 0; i < train.count; ++i) {
    if (std::find(known_ids.begin(), known_ids.end(), train.labels[i]) ==
        known_ids.end())
      continue;
    const uint8_t* img = train.image(i);
    for (int64_t p = 0; p < train.image_size(); p += train.ch)
      for (int c = 0; c < train.ch; ++c) {
        const double d = img[p + c] / 255.0 - st.mean[static_cast<size_t>(c)];
        st.stddev[static_cast<size_t>(c)] += d * d;
      }
  }
  for (auto& s : st.stddev) s = std::max(std::sqrt(s / static_cast<double>(n_pixels)), 1e-6);
  return st;
}

std::string stats_to_json(const ChannelStats& stats) {
  nlohmann::json j;
  j["mean"] = stats.mean;
  j["std"] = stats.stddev;
  return j.dump(2);
}

ChannelStats stats_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ChannelStats st;
  st.mean = j.at("mean").get<std::vector<double>>();
  st.stddev = j.at("std").get<std::vector<double>>();
  return st;
}

void flip_horizontal(uint8_t* img, int h, int w, int ch) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x)
      for (int c = 0; c < ch; ++c)
        std::swap(img[(static_cast<size_t>(y) * w + x) * ch + c],
                  img[(static_cast<size_t>(y) * w + (w - 1 - x)) * ch + c]);
}

void crop_and_flip(const uint8_t* src, uint8_t* dst, int h, int w, int ch, int dy,
                   int dx, bool flip, int pad) {
  for (int y = 0; y < h; ++y) {
    const int sy = y + dy - pad;
    for (int x = 0; x < w; ++x) {
      const int sx = x + dx - pad;
      uint8_t* out = dst + (static_cast<size_t>(y) * w + x) * ch;
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
        for (int c = 0; c < ch; ++c) out[c] = 0;
      } else {
        const uint8_t* in = src + (static_cast<size_t>(sy) * w + sx) * ch;
        for (int c = 0; c < ch; ++c) out[c] = in[c];
      }
    }
  }
  if (flip) flip_horizontal(dst, h, w, ch);
}

namespace {

void standardize_into(const uint8_t* img, double* out, int h, int w, int ch,
                      const ChannelStats& stats) {
  for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
    for (int c = 0; c < ch; ++c)
      out[p * ch + c] = (img[p * ch + c] / 255.0 - stats.mean[static_cast<size_t>(c)]) /
                        stats.stddev[static_cast<size_t>(c)];
}

std::vector<Batch> build_batches(const ImageDataset& ds, const OpenSetSplit& split,
                                 const ChannelStats& stats,
                                 const std::vector<int64_t>& order, int batch_size,
                                 const AugmentOptions* aug, Rng* aug_rng) {
  std::vector<Batch> batches;
  std::vector<uint8_t> scratch(static_cast<size_t>(ds.image_size()));
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t stop = std::min(order.size(), start + static_cast<size_t>(batch_size));
    const int b = static_cast<int>(stop - start);
    Batch batch;
    batch.images = Tensor::zeros({b, ds.h, ds.w, ds.ch});
    batch.labels.reserve(static_cast<size_t>(b));
    batch.source_index.assign(order.begin() + static_cast<long>(start),
                              order.begin() + static_cast<long>(stop));
    for (int r = 0; r < b; ++r) {
      const int64_t idx = batch.source_index[static_cast<size_t>(r)];
      const uint8_t* img = ds.image(idx);
      if (aug && aug->enabled) {
        const int dy = static_cast<int>(aug_rng->below(2 * aug->pad + 1));
        const int dx = static_cast<int>(aug_rng->below(2 * aug->pad + 1));
        const bool flip = aug_rng->bernoulli(aug->flip_prob);
        crop_and_flip(img, scratch.data(), ds.h, ds.w, ds.ch, dy, dx, flip, aug->pad);
        img = scratch.data();
      }
      standardize_into(img, batch.images.data.data() + static_cast<size_t>(r) * ds.image_size(),
                       ds.h, ds.w, ds.ch, stats);
      batch.labels.push_back(split.remap(ds.labels[idx]));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace

std::vector<Batch> epoch_batches(const ImageDataset& ds, const OpenSetSplit& split,
                                 const ChannelStats& stats, const AugmentOptions& aug,
                                 int batch_size, uint64_t master_seed, int epoch) {
  if (batch_size < 1) throw Error("epoch_batches: batch size must be positive");
  std::vector<int64_t> order;
  for (int64_t i = 0; i < ds.count; ++i)
    if (split.remap(ds.labels[i]) != kUnknownClass) order.push_back(i);

  Rng shuffle_rng(master_seed, "shuffle", static_cast<uint64_t>(split.trial),
                  static_cast<uint64_t>(epoch));
  shuffle_rng.shuffle(order);
  Rng aug_rng(master_seed, "augment", static_cast<uint64_t>(split.trial),
              static_cast<uint64_t>(epoch));

  auto batches = build_batches(ds, split, stats, order, batch_size, &aug, &aug_rng);
  for (const auto& b : batches)
    for (int lab : b.labels)
      if (lab == kUnknownClass)
        throw Error("epoch_batches: unknown-class sample leaked into training");
  return batches;
}

std::vector<Batch> eval_batches(const ImageDataset& ds, const OpenSetSplit& split,
                                const ChannelStats& stats,
                                const std::vector<int64_t>& indices, int batch_size) {
  if (batch_size < 1) throw Error("eval_batches: batch size must be positive");
  return build_batches(ds, split, stats, indices, batch_size, nullptr, nullptr);
}

}  // namespace omcl
