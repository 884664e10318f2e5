#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lmc {

enum class Architecture { mlp, conv_plain, conv_residual };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Network shape description.
///
/// `widths` holds one entry per hidden block: units for `mlp`, output channels
/// for the conv kinds. Every conv block is a 3x3, padding-1 convolution with
/// the given stride. For `conv_residual`, block 0 is a stem and blocks
/// (1,2), (3,4), ... form residual pairs with an identity skip around each
/// pair, so the depth must be odd and every pair must preserve its input shape.
struct ModelSpec {
  Architecture arch = Architecture::mlp;
  std::vector<int> widths;
  std::vector<bool> batch_norm;  // empty means no BN anywhere
  std::vector<int> strides;      // conv only; empty means all 1
  int input_channels = 1;
  int input_height = 1;
  int input_width = 1;
  int classes = 2;

  static ModelSpec mlp(int input_dim, std::vector<int> widths, int classes,
                       std::vector<bool> batch_norm = {});
  static ModelSpec conv(Architecture arch, int channels, int height, int width,
                        std::vector<int> widths, int classes,
                        std::vector<bool> batch_norm = {}, std::vector<int> strides = {});

  int depth() const { return static_cast<int>(widths.size()); }
  int input_dim() const { return input_channels * input_height * input_width; }
  bool has_bn(int block) const;
  int bn_layer_count() const;
  int stride(int block) const;

  /// Throws SpecError when the shape description is inconsistent.
  void validate() const;

  /// Exact number of trainable scalars implied by the block list.
  std::size_t param_count() const;

  bool operator==(const ModelSpec&) const = default;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

}  // namespace lmc
