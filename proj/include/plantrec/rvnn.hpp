#pragma once

// Recursive auto-encoder over combined-node binary trees. Every subtree is
// embedded in a 100-dimensional latent space: node encoders map parameters to
// latents, the sibling network merges the two child subtrees of a node and the
// parent-child network merges a node with (the merge of) its children. The
// decoder inverts every merge and two classifiers pick the next split and the
// node kind.

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plantrec/checkpoint.hpp"
#include "plantrec/lstring.hpp"
#include "plantrec/numcore.hpp"

namespace plantrec {

inline constexpr std::size_t kLatentDim = 100;
inline constexpr std::size_t kRecurHidden = 200;

enum class MergeType { Sibling = 0, ParentChild = 1 };
/// Classes of the split classifier.
enum class SplitDecision { Sibling = 0, ParentChild = 1, Stop = 2 };
inline constexpr std::size_t kSplitClasses = 3;

/// Per-kind, per-dimension affine map of node parameters to [-1, 1].
struct ParamScaler {
  std::array<std::vector<double>, kNodeKinds> lo;
  std::array<std::vector<double>, kNodeKinds> hi;

  void fit(const std::vector<AxialBinaryTree>& trees);
  bool fitted() const;
  num::Vector scale(NodeKind kind, const std::vector<double>& params) const;
  std::vector<double> unscale(NodeKind kind, const num::Vector& x) const;
};

struct LossWeights {
  double rec = 1.0;
  double step = 1.0;
  double split = 1.0;
  double node = 1.0;
};

struct RvnnConfig {
  std::size_t latent = kLatentDim;
  std::size_t hidden = kRecurHidden;
  LossWeights weights;
};

struct DecodeLimits {
  std::size_t max_nodes = 64;
  std::size_t max_depth = 64;
};

struct RvnnModel {
  RvnnConfig config;
  std::array<num::DenseLayer, kNodeKinds> node_enc;
  std::array<num::DenseLayer, kNodeKinds> node_dec;
  num::MlpBlock enc_sib;    // 2L -> H -> L
  num::MlpBlock enc_pc;     // 2L -> H -> L
  num::MlpBlock dec_sib;    // L -> H -> 2L
  num::MlpBlock dec_pc;     // L -> H -> 2L
  num::MlpBlock clf_split;  // L -> H -> 3 logits
  num::MlpBlock clf_node;   // L -> H -> 4 logits
  ParamScaler scaler;
  DecodeLimits limits;

  explicit RvnnModel(RvnnConfig cfg = {});
  void init(num::Rng& rng);
  void set_zero();
  std::vector<num::ParamView> param_views();
};

num::Vector encode_node(const RvnnModel& m, const BinaryNode& node);
std::vector<double> decode_node(const RvnnModel& m, const num::Vector& s, NodeKind kind);
num::Vector merge(const RvnnModel& m, MergeType type, const num::Vector& s1, const num::Vector& s2);
std::pair<num::Vector, num::Vector> split(const RvnnModel& m, MergeType type, const num::Vector& s);

struct MergeStep {
  MergeType type;
  std::size_t node;  ///< tree node whose subtree the merge produces
  num::Vector s1;    ///< node latent (parent-child) or lateral subtree (sibling)
  num::Vector s2;    ///< children latent (parent-child) or successor subtree (sibling)
  num::Vector out;
};

struct EncodeTrace {
  std::vector<MergeStep> steps;
};

/// Bottom-up encoding. A node with two children first merges the lateral and
/// successor subtree latents with the sibling network, then merges its own
/// latent with the result through the parent-child network.
num::Vector encode_tree(const RvnnModel& m, const AxialBinaryTree& t, EncodeTrace* trace = nullptr);

class DecodeBudgetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DecodeResult {
  AxialBinaryTree tree;
  std::vector<std::string> repairs;
};

/// Free top-down decoding driven by the classifiers. Structural problems are
/// repaired and listed in `repairs`; exceeding the limits throws DecodeBudgetError.
DecodeResult decode_tree(const RvnnModel& m, const num::Vector& s, const DecodeLimits& limits);
DecodeResult decode_tree(const RvnnModel& m, const num::Vector& s);

struct LossBreakdown {
  double rec = 0.0;
  double step = 0.0;
  double split = 0.0;
  double node = 0.0;
  double total = 0.0;
};

/// Weighted rec + step + split + node loss with teacher-forced decoding along
/// the tree. rec and step are squared errors averaged over their dimensions.
/// When `grad` is given, parameter gradients are accumulated into it (it must
/// have the model's shapes).
LossBreakdown loss_total(const RvnnModel& m, const AxialBinaryTree& t, RvnnModel* grad = nullptr);

struct AutoencoderStats {
  double topology_accuracy = 0.0;  ///< free decode matches the input topology
  double scaled_mse = 0.0;         ///< teacher-forced, per parameter, scaled units
  double loss = 0.0;               ///< mean total loss
  std::size_t trees = 0;
  std::size_t repaired = 0;        ///< decodes that needed at least one repair
};

AutoencoderStats evaluate_autoencoder(const RvnnModel& m, const std::vector<AxialBinaryTree>& trees);

struct RvnnTrainConfig {
  RvnnConfig model;
  num::AdamConfig adam;
  int epochs = 300;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  int pretrain_epochs = 20;  ///< node auto-encoder epochs before joint training
  double clip_norm = 0.0;    ///< global gradient norm limit, 0 = off
};

/// Trains only the per-kind node encoder/decoder pairs to reconstruct scaled
/// node parameters. Returns the final epoch's per-parameter MSE.
double pretrain_node_autoencoders(RvnnModel& m, const std::vector<AxialBinaryTree>& trees, int epochs,
                                  std::size_t batch, const num::AdamConfig& adam, num::Rng& rng);

struct RvnnEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  AutoencoderStats val;
  bool best = false;
};

struct RvnnTrainResult {
  RvnnModel model;  ///< best-validation parameters
  std::vector<RvnnEpochLog> log;
  int best_epoch = -1;
};

/// Adam with step decay, mini-batch gradient averaging and best-validation
/// selection (topology accuracy first, then loss). `on_epoch` sees every epoch
/// and the current best model (to checkpoint it).
RvnnTrainResult train_rvnn(const std::vector<AxialBinaryTree>& train,
                           const std::vector<AxialBinaryTree>& val, const RvnnTrainConfig& cfg,
                           const std::function<void(const RvnnEpochLog&, const RvnnModel& best)>& on_epoch = {});

std::vector<Tensor> rvnn_tensors(const RvnnModel& m);
RvnnModel rvnn_from_tensors(const std::vector<Tensor>& tensors);
void save_rvnn(const std::filesystem::path& path, const RvnnModel& m);
RvnnModel load_rvnn(const std::filesystem::path& path);

}  // namespace plantrec
