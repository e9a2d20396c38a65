#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dpvqa {

struct GradcheckOptions {
  std::size_t probes = 100;  // per module
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so gradients that vanish in
  // both estimates are compared on an absolute scale.
  double floor = 1e-5;
  std::uint64_t seed = 1;
  // Toy dimensions.
  std::size_t dim = 8;
  std::size_t steps = 3;
  std::size_t clips = 3;
  std::size_t clip_len = 2;
  // Test hook: applied to every analytic gradient before comparison.
  std::function<void(const std::string& param, std::span<double> grad)> corrupt;
};

struct ModuleReport {
  std::string module;
  std::size_t probes = 0;
  double max_rel_error = 0;
  std::string worst;  // "param[index]"
};

struct GradcheckReport {
  std::vector<ModuleReport> modules;
  double tolerance = 0;
  double seconds = 0;

  bool passed() const;
};

/// Central differences against backward() on the full toy graph: question
/// encoder, relation network, reasoner and all three answer heads, in double
/// precision. Modules are grouped by parameter-name prefix.
GradcheckReport gradcheck(const GradcheckOptions& options = {});

void print_report(std::ostream& out, const GradcheckReport& report);

}  // namespace dpvqa
