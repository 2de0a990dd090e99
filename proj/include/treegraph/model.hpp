#pragma once

#include <array>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "treegraph/checkpoint.hpp"
#include "treegraph/nn.hpp"

namespace tg {

enum class Variant { msdgcnn_pp, msdgcnn_parallel, dgcnn };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::msdgcnn_pp: return "msdgcnn_pp";
    case Variant::msdgcnn_parallel: return "msdgcnn_parallel";
    case Variant::dgcnn: return "dgcnn";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "msdgcnn_pp") return Variant::msdgcnn_pp;
  if (s == "msdgcnn_parallel") return Variant::msdgcnn_parallel;
  if (s == "dgcnn") return Variant::dgcnn;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::msdgcnn_pp;
  ScaleTriple scales{5, 20, 50};
  int backbone_k = 20;
  int fusion_width = 64;
  int embedding_dim = 1024;
  std::array<int, 2> head_hidden{512, 256};
  int num_classes = 7;
  float dropout = 0.5f;
  float leaky_slope = 0.2f;
  float bn_momentum = 0.1f;
  std::uint64_t init_seed = 1;

  // The strict k1 < k2 < k3 hierarchy is an operator-surface rule; it is
  // checked at the CLI boundary (scales.validate_hierarchy()) so that
  // coinciding scales remain constructible for analysis.
  void validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(dropout >= 0.f) || dropout >= 1.f) throw ConfigError("dropout must lie in [0,1)");
    if (backbone_k < 1) throw ConfigError("backbone_k must be >= 1");
    if (fusion_width < 1 || embedding_dim < 1) throw ConfigError("widths must be positive");
    if (scales.k_local < 1 || scales.k_branch < 1 || scales.k_canopy < 1)
      throw ConfigError("scale neighbor counts must be >= 1");
  }
};

// Per-layer shape/parameter table plus the total trainable count.
struct ModelSummary {
  struct Row {
    std::string name;
    std::string shape;
    std::size_t count;
  };
  std::vector<Row> rows;
  std::size_t parameter_count = 0;

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& r : rows) os << r.name << ' ' << r.shape << ' ' << r.count << '\n';
    os << "total " << parameter_count << '\n';
    return os.str();
  }
};

// MS-DGCNN++ classifier plus its two reference variants.
//
//   msdgcnn_pp:       multi-scale fusion (6/9/7-channel scale features ->
//                     per-scale conv -> max -> 192-concat -> fusion conv)
//                     feeding the shared dynamic-graph trunk
//   dgcnn:            single EdgeConv on raw coordinates feeding the trunk
//   msdgcnn_parallel: three parallel EdgeConvs on identical raw features,
//                     concatenated and lifted by shared pointwise MLPs
//
// The trunk runs EdgeConvs at the branch scale with skip concatenation, a
// pointwise embedding, global max+mean pooling, and an MLP head (dropout in
// the head only).
template <typename Real>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937 rng(static_cast<std::uint32_t>(cfg_.init_seed));
    const Real slope = static_cast<Real>(cfg_.leaky_slope);
    const int w = cfg_.fusion_width;

    switch (cfg_.variant) {
      case Variant::msdgcnn_pp:
        phi1_ = ConvBlock<Real>(reg_, "fusion.phi1", 6, w, slope, rng);
        phi2_ = ConvBlock<Real>(reg_, "fusion.phi2", 9, w, slope, rng);
        phi3_ = ConvBlock<Real>(reg_, "fusion.phi3", 7, w, slope, rng);
        psi_ = ConvBlock<Real>(reg_, "fusion.psi", 3 * w, w, slope, rng);
        build_trunk(rng);
        break;
      case Variant::dgcnn:
        edge1_ = EdgeConvLayer<Real>(reg_, "edge1", 3, w, cfg_.backbone_k, slope, rng);
        build_trunk(rng);
        break;
      case Variant::msdgcnn_parallel: {
        branch1_ = EdgeConvLayer<Real>(reg_, "branch1", 3, w, cfg_.scales.k_local, slope, rng);
        branch2_ = EdgeConvLayer<Real>(reg_, "branch2", 3, w, cfg_.scales.k_branch, slope, rng);
        branch3_ = EdgeConvLayer<Real>(reg_, "branch3", 3, w, cfg_.scales.k_canopy, slope, rng);
        mlp1_ = ConvBlock<Real>(reg_, "mlp1", 3 * w, 448, slope, rng);
        mlp2_ = ConvBlock<Real>(reg_, "mlp2", 448, 512, slope, rng);
        mlp3_ = ConvBlock<Real>(reg_, "mlp3", 512, cfg_.embedding_dim, slope, rng);
        build_head(cfg_.embedding_dim, rng);  // max pooling only
        break;
      }
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<Real>& registry() { return reg_; }
  const ParamRegistry<Real>& registry() const { return reg_; }

  // points (B,3,N) -> logits (B,C)
  BasicTensor<Real> forward(const BasicTensor<Real>& points, bool training) {
    if (points.rank() != 3 || points.dim(1) != 3)
      throw ShapeError("model forward: points must be (B,3,N), got " +
                       shape_str(points.shape()));
    const int n = points.dim(2);
    const int k_need = cfg_.variant == Variant::dgcnn
                           ? cfg_.backbone_k
                           : std::max(cfg_.scales.k_canopy, cfg_.backbone_k);
    if (n < k_need)
      throw ContractError("model forward: N=" + std::to_string(n) +
                          " is smaller than the largest neighborhood k=" +
                          std::to_string(k_need));

    switch (cfg_.variant) {
      case Variant::msdgcnn_pp: {
        auto z = fusion_forward(points, training);
        return trunk_forward(z, training);
      }
      case Variant::dgcnn: {
        auto z = edge1_.forward(points, training);
        return trunk_forward(z, training);
      }
      case Variant::msdgcnn_parallel: {
        auto g1 = branch1_.forward(points, training);
        auto g2 = branch2_.forward(points, training);
        auto g3 = branch3_.forward(points, training);
        auto m = concat_axis<Real>({g1, g2, g3}, 1);
        auto h = mlp3_.forward(mlp2_.forward(mlp1_.forward(m, training), training), training);
        auto pooled = max_over_axis(h, 2);
        return head_forward(pooled, training);
      }
    }
    throw ConfigError("unreachable variant");
  }

  // Multi-scale fusion stage: (B,3,N) -> (B,fusion_width,N). Neighborhoods
  // are taken in raw 3-space; later trunk layers rebuild their graphs in
  // feature space.
  BasicTensor<Real> fusion_forward(const BasicTensor<Real>& points, bool training) {
    if (points.dim(2) < cfg_.scales.k_canopy)
      throw ContractError("fusion: N must be >= k_canopy");
    auto idx = knn_multiscale(points, cfg_.scales);
    auto feats = build_scale_features(points, idx, static_cast<Real>(1e-8));
    auto g1 = max_over_axis(phi1_.forward(feats.f1, training), 3);
    auto g2 = max_over_axis(phi2_.forward(feats.f2, training), 3);
    auto g3 = max_over_axis(phi3_.forward(feats.f3, training), 3);
    auto m = concat_axis<Real>({g1, g2, g3}, 1);
    return psi_.forward(m, training);
  }

  ModelSummary summary() const {
    ModelSummary s;
    for (const auto& p : reg_.params()) {
      s.rows.push_back({p.name, shape_str(p.tensor.shape()), p.tensor.size()});
      s.parameter_count += p.tensor.size();
    }
    return s;
  }

  std::size_t parameter_count() const { return reg_.parameter_count(); }

  void save(const std::filesystem::path& path) const { checkpoint::save(reg_, path); }
  void load(const std::filesystem::path& path) { checkpoint::load(reg_, path); }

  std::mt19937& dropout_rng() { return dropout_rng_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_.seed(static_cast<std::uint32_t>(seed)); }

 private:
  void build_trunk(std::mt19937& rng) {
    const Real slope = static_cast<Real>(cfg_.leaky_slope);
    const int w = cfg_.fusion_width;
    edge2_ = EdgeConvLayer<Real>(reg_, "edge2", w, w, cfg_.backbone_k, slope, rng);
    edge3_ = EdgeConvLayer<Real>(reg_, "edge3", w, 2 * w, cfg_.backbone_k, slope, rng);
    edge4_ = EdgeConvLayer<Real>(reg_, "edge4", 2 * w, 4 * w, cfg_.backbone_k, slope, rng);
    embed_ = ConvBlock<Real>(reg_, "embed", 8 * w, cfg_.embedding_dim, slope, rng);
    build_head(2 * cfg_.embedding_dim, rng);  // max and mean pooling concatenated
  }

  void build_head(int in_f, std::mt19937& rng) {
    const Real slope = static_cast<Real>(cfg_.leaky_slope);
    fc1_ = LinearLayer<Real>(reg_, "head.fc1", in_f, cfg_.head_hidden[0], false, slope, rng);
    hbn1_ = BatchNormLayer<Real>(reg_, "head.bn1", cfg_.head_hidden[0]);
    fc2_ = LinearLayer<Real>(reg_, "head.fc2", cfg_.head_hidden[0], cfg_.head_hidden[1], true,
                             slope, rng);
    hbn2_ = BatchNormLayer<Real>(reg_, "head.bn2", cfg_.head_hidden[1]);
    fc3_ = LinearLayer<Real>(reg_, "head.fc3", cfg_.head_hidden[1], cfg_.num_classes, true,
                             slope, rng);
  }

  BasicTensor<Real> trunk_forward(const BasicTensor<Real>& z, bool training) {
    auto h2 = edge2_.forward(z, training);
    auto h3 = edge3_.forward(h2, training);
    auto h4 = edge4_.forward(h3, training);
    auto skip = concat_axis<Real>({z, h2, h3, h4}, 1);
    auto emb = embed_.forward(skip, training);
    auto pooled = concat_axis<Real>({max_over_axis(emb, 2), mean_over_axis(emb, 2)}, 1);
    return head_forward(pooled, training);
  }

  BasicTensor<Real> head_forward(const BasicTensor<Real>& pooled, bool training) {
    const Real slope = static_cast<Real>(cfg_.leaky_slope);
    const Real p = static_cast<Real>(cfg_.dropout);
    auto h = leaky_relu(hbn1_.forward(fc1_.forward(pooled), training), slope);
    h = dropout(h, p, training, dropout_rng_);
    h = leaky_relu(hbn2_.forward(fc2_.forward(h), training), slope);
    h = dropout(h, p, training, dropout_rng_);
    return fc3_.forward(h);
  }

  ModelConfig cfg_;
  ParamRegistry<Real> reg_;
  std::mt19937 dropout_rng_{1234};

  ConvBlock<Real> phi1_, phi2_, phi3_, psi_;
  EdgeConvLayer<Real> edge1_, branch1_, branch2_, branch3_;
  ConvBlock<Real> mlp1_, mlp2_, mlp3_;
  EdgeConvLayer<Real> edge2_, edge3_, edge4_;
  ConvBlock<Real> embed_;
  LinearLayer<Real> fc1_, fc2_, fc3_;
  BatchNormLayer<Real> hbn1_, hbn2_;
};

template <typename Real>
std::unique_ptr<Model<Real>> build_variant(const ModelConfig& cfg) {
  return std::make_unique<Model<Real>>(cfg);
}

// Human-readable key-value serialization of a model configuration, stored
// next to checkpoints so eval can rebuild the exact architecture.
inline std::string config_to_kv(const ModelConfig& c) {
  std::ostringstream os;
  os << "variant = " << variant_name(c.variant) << '\n'
     << "k1 = " << c.scales.k_local << '\n'
     << "k2 = " << c.scales.k_branch << '\n'
     << "k3 = " << c.scales.k_canopy << '\n'
     << "backbone_k = " << c.backbone_k << '\n'
     << "fusion_width = " << c.fusion_width << '\n'
     << "embedding_dim = " << c.embedding_dim << '\n'
     << "head_hidden1 = " << c.head_hidden[0] << '\n'
     << "head_hidden2 = " << c.head_hidden[1] << '\n'
     << "num_classes = " << c.num_classes << '\n'
     << "dropout = " << c.dropout << '\n'
     << "leaky_slope = " << c.leaky_slope << '\n'
     << "init_seed = " << c.init_seed << '\n';
  return os.str();
}

inline ModelConfig config_from_kv(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("model config line " + std::to_string(lineno) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "variant") c.variant = variant_from_name(val);
    else if (key == "k1") c.scales.k_local = std::stoi(val);
    else if (key == "k2") c.scales.k_branch = std::stoi(val);
    else if (key == "k3") c.scales.k_canopy = std::stoi(val);
    else if (key == "backbone_k") c.backbone_k = std::stoi(val);
    else if (key == "fusion_width") c.fusion_width = std::stoi(val);
    else if (key == "embedding_dim") c.embedding_dim = std::stoi(val);
    else if (key == "head_hidden1") c.head_hidden[0] = std::stoi(val);
    else if (key == "head_hidden2") c.head_hidden[1] = std::stoi(val);
    else if (key == "num_classes") c.num_classes = std::stoi(val);
    else if (key == "dropout") c.dropout = std::stof(val);
    else if (key == "leaky_slope") c.leaky_slope = std::stof(val);
    else if (key == "init_seed") c.init_seed = std::stoull(val);
    else throw ParseError("model config: unknown key '" + key + "'");
  }
  return c;
}

}  // namespace tg
