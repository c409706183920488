#pragma once

#include <filesystem>
#include <string>

namespace nest::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::filesystem::path data_dir;
  std::filesystem::path config_dir;
  std::filesystem::path work_dir;
  bool reuse = false;  // keep finished runs found in work_dir
};

Outcome gradient_correctness();
Outcome single_sample_outer_product();
Outcome neuron_growth_conformance();
Outcome growth_descent();
Outcome percentile_oracles();
Outcome batchnorm_folding();
Outcome flops_convention();

Outcome desk_scale_mlp(const Context& ctx);
Outcome partial_area_lenet5(const Context& ctx);
Outcome connection_curve_shape(const Context& ctx);
Outcome seed_sweep_trend(const Context& ctx);
Outcome determinism(const Context& ctx);

}  // namespace nest::acceptance
