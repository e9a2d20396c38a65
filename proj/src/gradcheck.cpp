#include "dpvqa/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>

#include "dpvqa/crn.hpp"
#include "dpvqa/decoders.hpp"
#include "dpvqa/language.hpp"
#include "dpvqa/mac.hpp"
#include "dpvqa/ops.hpp"

namespace dpvqa {

bool GradcheckReport::passed() const {
  return std::all_of(modules.begin(), modules.end(),
                     [&](const ModuleReport& m) { return m.max_rel_error < tolerance; });
}

namespace {

// The toy graph: every module wired together exactly as in a forward pass.
struct ToyGraph {
  static constexpr std::size_t kVocab = 12;
  static constexpr std::size_t kChannels = 6;
  static constexpr std::size_t kLabels = 5;

  explicit ToyGraph(const GradcheckOptions& o)
      : store(o.seed),
        lang(store, LanguageConfig{kVocab, 6, o.dim, 64}),
        crn(store, CrnConfig{o.clips, o.clip_len, o.clips, kChannels, o.dim, 32}),
        mac(store, MacConfig{o.dim, o.steps}),
        open(store, o.dim, kLabels),
        count(store, o.dim),
        choice(store, o.dim) {
    std::mt19937_64 rng(hash_string("inputs", o.seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> token(2, kVocab - 1);
    const std::size_t frames = o.clips * o.clip_len + 1;
    std::vector<double> values(frames * 2 * 2 * kChannels);
    for (auto& v : values) v = normal(rng);
    volume = Tensor<double>::from_data({frames, 2, 2, kChannels}, std::move(values));
    for (int i = 0; i < 5; ++i) question.push_back(token(rng));
    for (int a = 0; a < 3; ++a) answers.push_back({token(rng), token(rng)});
  }

  Tensor<double> loss() const {
    auto q = lang.encode(std::span<const std::size_t>(question));
    auto kb = crn.forward(FeatureVolume<double>{volume}, q.question, 0);
    auto memory = mac.run(q, kb).memory;
    auto l_open = cross_entropy(open.logits(memory, q.question), 2);
    auto l_count = squared_error(count.score(memory, q.question), 2.5);
    std::vector<Tensor<double>> answer_memories, answer_vectors;
    for (const auto& a : answers) {
      auto enc = lang.encode(std::span<const std::size_t>(a));
      answer_memories.push_back(mac.run(enc, kb).memory);
      answer_vectors.push_back(enc.question);
    }
    auto scores = choice.scores(memory, q.question, std::span<const Tensor<double>>(answer_memories),
                                std::span<const Tensor<double>>(answer_vectors));
    auto l_choice = hinge_loss(scores, 0);
    return add_n<double>(std::vector<Tensor<double>>{l_open, l_count, l_choice});
  }

  ParamStore<double> store;
  LanguageEncoder<double> lang;
  ClipRelationNetwork<double> crn;
  MacReasoner<double> mac;
  OpenEndedHead<double> open;
  CountHead<double> count;
  MultiChoiceHead<double> choice;
  Tensor<double> volume;
  std::vector<std::size_t> question;
  std::vector<std::vector<std::size_t>> answers;
};

std::string module_of(const std::string& param) { return param.substr(0, param.find('.')); }

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ToyGraph graph(options);
  auto& store = graph.store;

  store.zero_grad();
  backward(graph.loss());
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : store.entries()) {
    auto& g = analytic[name];
    g.assign(p.grad().begin(), p.grad().end());
    if (options.corrupt) options.corrupt(name, std::span<double>(g));
  }

  std::map<std::string, std::vector<std::string>> modules;
  for (const auto& [name, p] : store.entries()) modules[module_of(name)].push_back(name);

  GradcheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(hash_string("probes", options.seed));
  NoGradGuard no_grad;
  for (const auto& [module, names] : modules) {
    std::vector<double> weights;
    for (const auto& n : names) weights.push_back(static_cast<double>(store.get(n).numel()));
    std::discrete_distribution<std::size_t> pick_param(weights.begin(), weights.end());
    ModuleReport mr;
    mr.module = module;
    for (std::size_t probe = 0; probe < options.probes; ++probe) {
      const std::string& name = names[pick_param(rng)];
      auto& p = store.get(name);
      std::uniform_int_distribution<std::size_t> pick_index(0, p.numel() - 1);
      const std::size_t i = pick_index(rng);
      auto data = p.mutable_data();
      const double saved = data[i];
      data[i] = saved + options.epsilon;
      const double plus = graph.loss().item();
      data[i] = saved - options.epsilon;
      const double minus = graph.loss().item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2 * options.epsilon);
      const double a = analytic[name][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++mr.probes;
      if (rel >= mr.max_rel_error) {
        mr.max_rel_error = rel;
        mr.worst = name + "[" + std::to_string(i) + "]";
      }
    }
    report.modules.push_back(mr);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void print_report(std::ostream& out, const GradcheckReport& report) {
  for (const auto& m : report.modules) {
    out << (m.max_rel_error < report.tolerance ? "ok   " : "FAIL ") << std::left << std::setw(8)
        << m.module << " probes " << m.probes << "  max rel error " << std::scientific
        << std::setprecision(3) << m.max_rel_error << "  worst " << m.worst << '\n';
  }
  out << std::defaultfloat << (report.passed() ? "gradcheck passed" : "gradcheck FAILED")
      << " (tolerance " << report.tolerance << ", " << std::fixed << std::setprecision(1)
      << report.seconds << "s)\n"
      << std::defaultfloat;
}

}  // namespace dpvqa
