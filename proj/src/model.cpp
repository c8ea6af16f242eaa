#include "icon/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace icon {

// ==== frozen backbone =======================================================

Backbone make_backbone(int input_dim, int hidden_dim, int layers, Rng& rng) {
  if (input_dim < 1 || hidden_dim < 1 || layers < 1)
    throw ShapeMismatch("make_backbone: dimensions must be positive");
  Backbone bb;
  bb.input_dim = input_dim;
  bb.hidden_dim = hidden_dim;
  for (int l = 0; l < layers; ++l) {
    const int in = bb.layer_input_dim(l);
    bb.weights.push_back(Matrix::gaussian(hidden_dim, in, std::sqrt(2.0 / in), rng));
    bb.biases.push_back(Vec(hidden_dim, 0.0));
  }
  return bb;
}

// ==== adapters ==============================================================

int AdapterSet::slot_for_layer(int layer) const {
  for (int i = 0; i < int(locations.size()); ++i)
    if (locations[i] == layer) return i;
  return -1;
}

std::size_t AdapterSet::flat_size() const {
  std::size_t n = 0;
  for (const AdapterLayer& a : layers)
    n += a.down.data.size() + a.up.data.size() + 1;
  return n;
}

Vec AdapterSet::flatten() const {
  Vec flat;
  flat.reserve(flat_size());
  for (const AdapterLayer& a : layers) {
    flat.insert(flat.end(), a.down.data.begin(), a.down.data.end());
    flat.insert(flat.end(), a.up.data.begin(), a.up.data.end());
    flat.push_back(a.scale);
  }
  return flat;
}

void AdapterSet::unflatten(const Vec& flat) {
  if (flat.size() != flat_size())
    throw ShapeMismatch("AdapterSet::unflatten: flat length does not match");
  std::size_t pos = 0;
  for (AdapterLayer& a : layers) {
    std::copy_n(flat.begin() + pos, a.down.data.size(), a.down.data.begin());
    pos += a.down.data.size();
    std::copy_n(flat.begin() + pos, a.up.data.size(), a.up.data.begin());
    pos += a.up.data.size();
    a.scale = flat[pos++];
  }
}

AdapterSet make_adapters(const Backbone& backbone, int count, int rank, Rng& rng) {
  if (count < 0 || count > backbone.layers())
    throw ShapeMismatch("make_adapters: count outside [0, layers]");
  if (rank < 1) throw ShapeMismatch("make_adapters: rank must be positive");
  AdapterSet set;
  set.rank = rank;
  for (int l = 0; l < count; ++l) {
    AdapterLayer a;
    a.down = Matrix::gaussian(rank, backbone.layer_input_dim(l), 0.02, rng);
    a.up = Matrix(backbone.hidden_dim, rank);
    a.scale = 1.0;
    set.locations.push_back(l);
    set.layers.push_back(std::move(a));
  }
  return set;
}

void ema_update(EmaAdapters& ema, const AdapterSet& live) {
  if (ema.params.flat_size() != live.flat_size())
    throw ShapeMismatch("ema_update: adapter shapes differ");
  const double d = ema.decay;
  for (int i = 0; i < int(live.layers.size()); ++i) {
    AdapterLayer& e = ema.params.layers[i];
    const AdapterLayer& v = live.layers[i];
    for (std::size_t j = 0; j < v.down.data.size(); ++j)
      e.down.data[j] = d * e.down.data[j] + (1.0 - d) * v.down.data[j];
    for (std::size_t j = 0; j < v.up.data.size(); ++j)
      e.up.data[j] = d * e.up.data[j] + (1.0 - d) * v.up.data[j];
    e.scale = d * e.scale + (1.0 - d) * v.scale;
  }
}

// ==== classifier head =======================================================

int ClassifierHead::append_row() {
  row_w.push_back(Vec(feature_dim, 0.0));
  row_b.push_back(0.0);
  ++revision;
  return rows() - 1;
}

// ==== forward / backward ====================================================

namespace {

Vec relu(const Vec& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return out;
}

}  // namespace

ForwardResult forward(const Backbone& backbone, const AdapterSet& adapters,
                      const ClassifierHead& head, const Vec& x) {
  if (int(x.size()) != backbone.input_dim)
    throw DimMismatch("forward: input length != backbone input_dim");
  if (head.feature_dim != backbone.hidden_dim)
    throw ShapeMismatch("forward: head feature_dim != backbone hidden_dim");

  ForwardResult out;
  ForwardCache& cache = out.cache;
  const int slots = int(adapters.layers.size());
  cache.adapter_pre.resize(slots);
  cache.adapter_mid.resize(slots);
  cache.adapter_up.resize(slots);

  Vec h = x;
  for (int l = 0; l < backbone.layers(); ++l) {
    cache.layer_in.push_back(h);
    Vec pre = matvec(backbone.weights[l], h);
    axpy(1.0, backbone.biases[l], pre);
    const int slot = adapters.slot_for_layer(l);
    if (slot >= 0) {
      const AdapterLayer& a = adapters.layers[slot];
      cache.adapter_pre[slot] = matvec(a.down, h);
      cache.adapter_mid[slot] = relu(cache.adapter_pre[slot]);
      cache.adapter_up[slot] = matvec(a.up, cache.adapter_mid[slot]);
      axpy(a.scale, cache.adapter_up[slot], pre);
    }
    cache.preact.push_back(pre);
    h = relu(pre);
  }
  cache.features = h;
  cache.head_rows = head.rows();
  cache.head_revision = head.revision;

  out.logits.resize(head.rows());
  for (int r = 0; r < head.rows(); ++r)
    out.logits[r] = dot(head.row_w[r], h) + head.row_b[r];
  return out;
}

BackwardResult backward(const Backbone& backbone, const AdapterSet& adapters,
                        const ClassifierHead& head, const ForwardCache& cache,
                        const Vec& grad_logits) {
  if (cache.head_rows != head.rows() || cache.head_revision != head.revision)
    throw StaleCache("backward: cache predates a head mutation");
  if (int(cache.layer_in.size()) != backbone.layers())
    throw StaleCache("backward: cache layer count != backbone layers");
  if (int(grad_logits.size()) != head.rows())
    throw DimMismatch("backward: grad_logits length != head rows");

  BackwardResult out;
  out.head_grad.w.assign(head.rows(), Vec(head.feature_dim, 0.0));
  out.head_grad.b.assign(head.rows(), 0.0);

  // Head rows and the gradient flowing into the final feature vector.
  Vec grad_h(head.feature_dim, 0.0);
  for (int r = 0; r < head.rows(); ++r) {
    const double g = grad_logits[r];
    out.head_grad.b[r] = g;
    if (g == 0.0) continue;
    axpy(g, cache.features, out.head_grad.w[r]);
    axpy(g, head.row_w[r], grad_h);
  }

  std::vector<Matrix> grad_down(adapters.layers.size());
  std::vector<Matrix> grad_up(adapters.layers.size());
  Vec grad_scale(adapters.layers.size(), 0.0);
  for (int i = 0; i < int(adapters.layers.size()); ++i) {
    grad_down[i] = Matrix(adapters.layers[i].down.rows, adapters.layers[i].down.cols);
    grad_up[i] = Matrix(adapters.layers[i].up.rows, adapters.layers[i].up.cols);
  }

  for (int l = backbone.layers() - 1; l >= 0; --l) {
    // Through the output ReLU of layer l.
    Vec grad_pre(grad_h.size());
    for (std::size_t i = 0; i < grad_h.size(); ++i)
      grad_pre[i] = cache.preact[l][i] > 0.0 ? grad_h[i] : 0.0;

    Vec grad_in = matvec_t(backbone.weights[l], grad_pre);
    const int slot = adapters.slot_for_layer(l);
    if (slot >= 0) {
      const AdapterLayer& a = adapters.layers[slot];
      grad_scale[slot] = dot(grad_pre, cache.adapter_up[slot]);
      // up: grad = scale * grad_pre (outer) mid
      for (int r = 0; r < a.up.rows; ++r) {
        const double g = a.scale * grad_pre[r];
        if (g == 0.0) continue;
        for (int c = 0; c < a.up.cols; ++c)
          grad_up[slot].at(r, c) += g * cache.adapter_mid[slot][c];
      }
      Vec grad_mid = matvec_t(a.up, grad_pre);
      for (double& g : grad_mid) g *= a.scale;
      Vec grad_apre(grad_mid.size());
      for (std::size_t i = 0; i < grad_mid.size(); ++i)
        grad_apre[i] = cache.adapter_pre[slot][i] > 0.0 ? grad_mid[i] : 0.0;
      for (int r = 0; r < a.down.rows; ++r) {
        const double g = grad_apre[r];
        if (g == 0.0) continue;
        for (int c = 0; c < a.down.cols; ++c)
          grad_down[slot].at(r, c) += g * cache.layer_in[l][c];
      }
      axpy(1.0, matvec_t(a.down, grad_apre), grad_in);
    }
    grad_h = std::move(grad_in);
  }

  out.adapter_grad.reserve(adapters.flat_size());
  for (int i = 0; i < int(adapters.layers.size()); ++i) {
    out.adapter_grad.insert(out.adapter_grad.end(), grad_down[i].data.begin(),
                            grad_down[i].data.end());
    out.adapter_grad.insert(out.adapter_grad.end(), grad_up[i].data.begin(),
                            grad_up[i].data.end());
    out.adapter_grad.push_back(grad_scale[i]);
  }
  return out;
}

Vec ensemble_class_logits(const Vec& online, const Vec& ema) {
  if (online.size() != ema.size())
    throw DimMismatch("ensemble_class_logits: length mismatch");
  Vec out(online.size());
  for (std::size_t i = 0; i < online.size(); ++i) out[i] = std::max(online[i], ema[i]);
  return out;
}

// ==== bundle + checkpoint ===================================================

Model make_model(const ModelConfig& cfg, int feature_dim, Rng& rng) {
  if (cfg.backbone_layers < 1 || cfg.hidden_dim < 1 || feature_dim < 1)
    throw ShapeMismatch("make_model: dimensions must be positive");
  int count = cfg.adapter_layer_count;
  if (count == 0) count = (5 * cfg.backbone_layers + 11) / 12;
  Model m;
  Rng bb_rng = rng.fork("backbone");
  Rng ad_rng = rng.fork("adapters");
  m.backbone = make_backbone(feature_dim, cfg.hidden_dim, cfg.backbone_layers, bb_rng);
  m.adapters = make_adapters(m.backbone, count, cfg.adapter_rank, ad_rng);
  m.ema.params = m.adapters;
  m.ema.decay = cfg.ema_decay;
  m.head.feature_dim = cfg.hidden_dim;
  return m;
}

namespace {

void write_vec(std::ostream& os, const char* name, const Vec& v) {
  os << name << ' ' << v.size();
  char buf[64];
  for (const double x : v) {
    std::snprintf(buf, sizeof(buf), " %a", x);
    os << buf;
  }
  os << '\n';
}

Vec read_vec(std::istream& is, const std::string& expected_name) {
  std::string name;
  std::size_t n = 0;
  if (!(is >> name >> n) || name != expected_name)
    throw ParseError("model checkpoint: expected section " + expected_name);
  Vec v(n);
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(is >> tok)) throw ParseError("model checkpoint: truncated " + expected_name);
    v[i] = std::strtod(tok.c_str(), nullptr);
  }
  return v;
}

}  // namespace

void save_model(const std::string& path, const Model& model) {
  std::ofstream os(path);
  if (!os) throw ParseError("save_model: cannot open " + path);
  os << "icon-model v1\n";
  os << "input_dim " << model.backbone.input_dim << " hidden_dim "
     << model.backbone.hidden_dim << " layers " << model.backbone.layers()
     << " adapter_rank " << model.adapters.rank << " adapter_layers "
     << model.adapters.locations.size() << " head_rows " << model.head.rows() << '\n';
  os << "locations";
  for (const int l : model.adapters.locations) os << ' ' << l;
  os << '\n';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", model.ema.decay);
  os << "ema_decay " << buf << '\n';
  for (int l = 0; l < model.backbone.layers(); ++l) {
    write_vec(os, "backbone_w", model.backbone.weights[l].data);
    write_vec(os, "backbone_b", model.backbone.biases[l]);
  }
  write_vec(os, "adapters", model.adapters.flatten());
  write_vec(os, "ema", model.ema.params.flatten());
  for (int r = 0; r < model.head.rows(); ++r) write_vec(os, "head_w", model.head.row_w[r]);
  write_vec(os, "head_b", model.head.row_b);
}

Model load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_model: cannot open " + path);
  std::string magic, version;
  is >> magic >> version;
  if (magic != "icon-model" || version != "v1")
    throw ParseError("load_model: unrecognized checkpoint header");

  auto read_kv = [&](const char* key) -> long {
    std::string k;
    long v;
    if (!(is >> k >> v) || k != key)
      throw ParseError(std::string("load_model: expected field ") + key);
    return v;
  };
  const int input_dim = int(read_kv("input_dim"));
  const int hidden_dim = int(read_kv("hidden_dim"));
  const int layers = int(read_kv("layers"));
  const int rank = int(read_kv("adapter_rank"));
  const int adapter_layers = int(read_kv("adapter_layers"));
  const int head_rows = int(read_kv("head_rows"));

  Model m;
  m.backbone.input_dim = input_dim;
  m.backbone.hidden_dim = hidden_dim;
  std::string key;
  if (!(is >> key) || key != "locations") throw ParseError("load_model: expected locations");
  m.adapters.rank = rank;
  for (int i = 0; i < adapter_layers; ++i) {
    int l = 0;
    if (!(is >> l)) throw ParseError("load_model: truncated locations");
    m.adapters.locations.push_back(l);
  }
  std::string tok;
  if (!(is >> key >> tok) || key != "ema_decay")
    throw ParseError("load_model: expected ema_decay");
  m.ema.decay = std::strtod(tok.c_str(), nullptr);

  for (int l = 0; l < layers; ++l) {
    const int in = m.backbone.layer_input_dim(l);
    Matrix w(hidden_dim, in);
    w.data = read_vec(is, "backbone_w");
    if (int(w.data.size()) != hidden_dim * in)
      throw ParseError("load_model: backbone weight size mismatch");
    m.backbone.weights.push_back(std::move(w));
    Vec b = read_vec(is, "backbone_b");
    if (int(b.size()) != hidden_dim)
      throw ParseError("load_model: backbone bias size mismatch");
    m.backbone.biases.push_back(std::move(b));
  }
  for (const int l : m.adapters.locations) {
    AdapterLayer a;
    a.down = Matrix(rank, m.backbone.layer_input_dim(l));
    a.up = Matrix(hidden_dim, rank);
    m.adapters.layers.push_back(std::move(a));
  }
  m.adapters.unflatten(read_vec(is, "adapters"));
  m.ema.params = m.adapters;
  m.ema.params.unflatten(read_vec(is, "ema"));
  m.head.feature_dim = hidden_dim;
  for (int r = 0; r < head_rows; ++r) {
    Vec w = read_vec(is, "head_w");
    if (int(w.size()) != hidden_dim) throw ParseError("load_model: head row size mismatch");
    m.head.row_w.push_back(std::move(w));
  }
  m.head.row_b = read_vec(is, "head_b");
  if (int(m.head.row_b.size()) != head_rows)
    throw ParseError("load_model: head bias size mismatch");
  m.head.revision = std::uint64_t(head_rows);
  return m;
}

}  // namespace icon
