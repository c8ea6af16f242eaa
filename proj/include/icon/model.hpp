#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icon/numerics.hpp"
#include "icon/rng.hpp"

namespace icon {

// ==== frozen backbone =======================================================

// Dense ReLU stack, seeded once and never trained. Layer l maps
// layer_input_dim(l) -> hidden_dim.
struct Backbone {
  int input_dim = 0;
  int hidden_dim = 0;
  std::vector<Matrix> weights;  // weights[l]: hidden_dim x layer_input_dim(l)
  std::vector<Vec> biases;

  int layers() const { return int(weights.size()); }
  int layer_input_dim(int l) const { return l == 0 ? input_dim : hidden_dim; }
};

Backbone make_backbone(int input_dim, int hidden_dim, int layers, Rng& rng);

// ==== adapters ==============================================================

// Parallel bottleneck branch on one backbone layer:
//   out = relu(W x + b + scale * up * relu(down * x)).
struct AdapterLayer {
  Matrix down;        // rank x layer_input_dim
  Matrix up;          // hidden_dim x rank
  double scale = 1.0;
};

// Trainable adapters attached to a subset of backbone layers. Flattening is
// canonical: layers in ascending location order, each as down (row-major),
// up (row-major), scale.
struct AdapterSet {
  int rank = 0;
  std::vector<int> locations;        // ascending backbone layer indices
  std::vector<AdapterLayer> layers;  // parallel to locations

  int slot_for_layer(int layer) const;
  std::size_t flat_size() const;
  Vec flatten() const;
  void unflatten(const Vec& flat);  // throws ShapeMismatch on length
};

// Adapters on the first `count` layers; down is seeded Gaussian (std 0.02),
// up starts at zero so a fresh adapter is an exact no-op, scale starts at 1.
AdapterSet make_adapters(const Backbone& backbone, int count, int rank, Rng& rng);

// Shadow copy updated as ema = decay * ema + (1 - decay) * live.
struct EmaAdapters {
  AdapterSet params;
  double decay = 0.9999;
};

void ema_update(EmaAdapters& ema, const AdapterSet& live);

// ==== classifier head =======================================================

// Append-only linear head over the final feature vector. Row ids are stable;
// rows are never removed or reordered.
struct ClassifierHead {
  int feature_dim = 0;
  std::vector<Vec> row_w;
  Vec row_b;
  std::uint64_t revision = 0;  // bumped on every append

  int rows() const { return int(row_w.size()); }
  int append_row();  // zero-initialized; returns the new row id
};

// ==== forward / backward ====================================================

struct ForwardCache {
  std::vector<Vec> layer_in;       // input of every backbone layer
  std::vector<Vec> preact;         // pre-ReLU output of every layer
  std::vector<Vec> adapter_pre;    // down * x, adapted layers only (by slot)
  std::vector<Vec> adapter_mid;    // relu(down * x)
  std::vector<Vec> adapter_up;     // up * relu(down * x)
  Vec features;                    // final activation fed to the head
  int head_rows = 0;
  std::uint64_t head_revision = 0;
};

struct ForwardResult {
  Vec logits;  // one raw logit per head row
  ForwardCache cache;
};

ForwardResult forward(const Backbone& backbone, const AdapterSet& adapters,
                      const ClassifierHead& head, const Vec& x);

struct HeadGrad {
  std::vector<Vec> w;
  Vec b;
};

struct BackwardResult {
  Vec adapter_grad;  // flat, same layout as AdapterSet::flatten
  HeadGrad head_grad;
};

// Analytic reverse pass for d(loss)/d(adapters, head) given d(loss)/d(logits).
// Backbone parameters receive no gradient. Throws StaleCache when the cache
// does not match the current head.
BackwardResult backward(const Backbone& backbone, const AdapterSet& adapters,
                        const ClassifierHead& head, const ForwardCache& cache,
                        const Vec& grad_logits);

// Elementwise max of two per-class logit vectors.
Vec ensemble_class_logits(const Vec& online, const Vec& ema);

// ==== bundle + checkpoint ===================================================

struct ModelConfig {
  int backbone_layers = 4;
  int hidden_dim = 32;
  int adapter_layer_count = 0;  // 0 = ceil(5 * layers / 12)
  int adapter_rank = 5;
  double ema_decay = 0.9999;
};

struct Model {
  Backbone backbone;
  AdapterSet adapters;
  EmaAdapters ema;
  ClassifierHead head;
};

Model make_model(const ModelConfig& cfg, int feature_dim, Rng& rng);

// Self-describing text checkpoint; parameters are stored as hex floats, so a
// round trip reproduces every value bit for bit.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace icon
