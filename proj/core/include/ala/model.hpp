// SPDX-License-Identifier: Apache-2.0
//
// Full explanation model: encoder + lattice adapter + perception branch.
#pragma once

#include "ala/adapter.hpp"
#include "ala/encoder.hpp"
#include "ala/perception.hpp"

#include <cstdint>
#include <memory>

namespace ala {

/// Anything that maps an image to a class probability.
class ClassScorer {
 public:
  virtual ~ClassScorer() = default;
  virtual double class_probability(const ImageTensor& image, int cls) const = 0;
};

/// A scorer that can also differentiate the class probability w.r.t. pixels.
class DifferentiableScorer : public ClassScorer {
 public:
  virtual ImageTensor input_gradient(const ImageTensor& image, int cls) const = 0;
};

struct ModelConfig {
  EncoderConfig encoder;
  AdapterConfig adapter;
  int num_classes = 4;
  std::uint64_t init_seed = 0;
  double attention_norm_power = 0.5;  // see PerceptionBranch; 0 = plain product

  void validate();
};

struct ForwardPass {
  EncoderOutput taps;
  ag::Var alpha;  // (cells x 1); undefined when the gate substitutes ones
  ag::Var h_ala;  // what f2 and the perception branch actually receive
  PerceptionBranch::Output pb;
  ag::Var ala_logits;
  GateState gate = GateState::PassAlpha;
};

class AlaModel : public DifferentiableScorer {
 public:
  explicit AlaModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const Encoder& encoder() const { return *encoder_; }
  const LatticeAdapter& adapter() const { return *adapter_; }
  const PerceptionBranch& perception() const { return *perception_; }
  Encoder& encoder() { return *encoder_; }
  LatticeAdapter& adapter() { return *adapter_; }
  PerceptionBranch& perception() { return *perception_; }

  ForwardPass forward(const ag::Var& image, GateState gate) const;

  /// Inference: perception-branch prediction with the attention passed through.
  Prediction predict(const ImageTensor& image) const;
  /// Inference attention map for an image.
  AttentionMap explain(const ImageTensor& image) const;

  double class_probability(const ImageTensor& image, int cls) const override;
  ImageTensor input_gradient(const ImageTensor& image, int cls) const override;

  /// Grad-CAM inputs: rectified pre-pooling activation of f_PB and the
  /// gradient of the class logit w.r.t. it, both (cells x channels).
  std::pair<Matrix, Matrix> activation_and_gradient(const ImageTensor& image, int cls) const;

  ParameterList parameters() const;        // everything, checkpoint order
  ParameterList ala_parameters() const;     // adapter incl. taps, f1, f2
  ParameterList lora_parameters() const;
  ParameterList perception_parameters() const;
  ParameterList encoder_base_parameters() const;

  /// Toggles gradient recording on every adapter parameter.
  void set_ala_trainable(bool on);

 private:
  ModelConfig config_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<LatticeAdapter> adapter_;
  std::unique_ptr<PerceptionBranch> perception_;
};

/// Copies every parameter value of `from` into `to` (matching names).
void copy_parameters(const ParameterList& from, const ParameterList& to);

}  // namespace ala
