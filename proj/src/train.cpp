#include "dpvqa/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dpvqa/fvol.hpp"
#include "dpvqa/loader.hpp"
#include "dpvqa/ops.hpp"

namespace dpvqa {

using nlohmann::json;

template <class T>
Adam<T>::Adam(ParamStore<T>& store, double beta1, double beta2, double eps)
    : store_(store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& [name, p] : store_.entries()) {
    m_[name].assign(p.numel(), 0.0);
    v_[name].assign(p.numel(), 0.0);
  }
}

template <class T>
void Adam<T>::step(double lr, double grad_clip, double weight_decay) {
  ++t_;
  double clip_scale = 1.0;
  if (grad_clip > 0) {
    double sq = 0;
    for (auto& [name, p] : store_.entries()) {
      for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    double norm = std::sqrt(sq);
    if (norm > grad_clip) clip_scale = grad_clip / norm;
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : store_.entries()) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != p.numel()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    auto w = p.mutable_data();
    auto g = p.grad();
    if (g.size() != w.size()) continue;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double gi = static_cast<double>(g[i]) * clip_scale;
      if (weight_decay > 0) gi += weight_decay * static_cast<double>(w[i]);
      m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
      double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
    p.zero_grad();
  }
}

namespace {

json record_json(const MetricsRecord& r, bool with_clock) {
  json j = {{"epoch", r.epoch},
            {"split", r.split},
            {"items", r.items},
            {"loss", r.loss},
            {"accuracy", r.accuracy},
            {"temporal_accuracy", r.temporal_accuracy},
            {"task_accuracy", r.task_accuracy}};
  j["count_mse"] = r.count_mse ? json(*r.count_mse) : json(nullptr);
  if (with_clock) j["wall_clock"] = r.wall_clock;
  return j;
}

}  // namespace

std::string MetricsRecord::to_json() const { return record_json(*this, true).dump(); }

std::string MetricsRecord::deterministic_json() const { return record_json(*this, false).dump(); }

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  try {
    auto j = json::parse(line);
    MetricsRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.split = j.at("split").get<std::string>();
    r.items = j.at("items").get<std::size_t>();
    r.loss = j.at("loss").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.temporal_accuracy = j.at("temporal_accuracy").get<double>();
    r.task_accuracy = j.at("task_accuracy").get<std::map<std::string, double>>();
    if (!j.at("count_mse").is_null()) r.count_mse = j.at("count_mse").get<double>();
    if (j.contains("wall_clock")) r.wall_clock = j.at("wall_clock").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad metrics record: ") + e.what());
  }
}

MetricsRecord score_predictions(const Corpus& corpus, const std::vector<std::size_t>& items,
                                const std::vector<std::string>& predictions,
                                const std::string& split, double loss) {
  if (items.empty()) throw ContractError("evaluate: split '" + split + "' has no items");
  if (predictions.size() != items.size()) {
    throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(items.size()) + " items");
  }
  MetricsRecord r;
  r.split = split;
  r.items = items.size();
  r.loss = loss;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_task;
  std::size_t correct = 0, temporal = 0, temporal_correct = 0, counts = 0;
  double sq = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const QAItem& qa = corpus.items.at(items[i]);
    const bool ok = predictions[i] == qa.answer;
    auto& [hit, total] = per_task[to_string(qa.task)];
    ++total;
    if (ok) {
      ++hit;
      ++correct;
    }
    if (is_temporal(qa.task)) {
      ++temporal;
      if (ok) ++temporal_correct;
    }
    if (qa.task == Task::repetition_count) {
      double predicted = 0;
      try {
        predicted = std::stod(predictions[i]);
      } catch (const std::exception&) {
        throw ContractError("evaluate: count prediction '" + predictions[i] + "' is not a number");
      }
      double diff = predicted - std::stod(qa.answer);
      sq += diff * diff;
      ++counts;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  r.temporal_accuracy =
      temporal ? static_cast<double>(temporal_correct) / static_cast<double>(temporal) : 0.0;
  for (const auto& [task, ht] : per_task) {
    r.task_accuracy[task] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  }
  if (counts) r.count_mse = sq / static_cast<double>(counts);
  return r;
}

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store, std::uint64_t hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write("DPVQ", 4);
  write_u32(out, kCheckpointVersion);
  write_u64(out, hash);
  write_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store.entries()) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.rank()));
    for (std::size_t e : p.shape()) write_u64(out, e);
    for (T v : p.data()) write_f32(out, static_cast<float>(v));
  }
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

template <class T>
void load_checkpoint(const std::string& path, ParamStore<T>& store, std::uint64_t hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "DPVQ") throw FormatError(path + ": not a DPVQ checkpoint");
  const auto version = read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto stored = read_u64(in, path);
  if (stored != hash) {
    throw FormatError(path + ": checkpoint was trained with a different configuration or vocabulary");
  }
  const auto count = read_u32(in, path);
  if (count != store.size()) {
    throw FormatError(path + ": checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(store.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = read_u32(in, path);
    if (len > 4096) throw FormatError(path + ": corrupt parameter name");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw FormatError(path + ": truncated parameter name");
    if (!store.contains(name)) throw FormatError(path + ": unknown parameter '" + name + "'");
    auto& p = store.get(name);
    const auto rank = read_u32(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_u64(in, path));
    if (shape != p.shape()) {
      throw FormatError(path + ": parameter '" + name + "' has shape " + shape_str(shape) +
                        ", expected " + shape_str(p.shape()));
    }
    auto data = p.mutable_data();
    for (auto& v : data) v = static_cast<T>(read_f32(in, path));
  }
}

template <class T>
Trainer<T>::Trainer(const RunConfig& cfg, const Corpus& c)
    : config(cfg),
      corpus(c),
      vocab(corpus_vocabulary(c)),
      model(cfg.model_config(c.volumes.empty() ? channel::kCount : c.volumes.front().channels),
            vocab, cfg.seed),
      optimizer(model.params()) {
  config.validate();
}

namespace {

template <class T>
double train_on(Trainer<T>& tr, const std::vector<Example<T>>& batch,
                std::vector<std::string>* predictions, std::size_t step_index) {
  if (batch.empty()) throw ContractError("train step: empty batch");
  const T inv = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  double total = 0;
  bool all_counts = true;
  for (const auto& ex : batch) {
    auto out = tr.model.forward(ex, true, hash_string(std::to_string(step_index), ex.item));
    auto loss = tr.model.loss(out, ex);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      std::string q;
      for (const auto& t : tr.corpus.items[ex.item].tokens) q += t + " ";
      throw NumericError("non-finite loss " + std::to_string(value) + " at optimizer step " +
                         std::to_string(step_index) + " on item " + std::to_string(ex.item) +
                         " (" + q + ")");
    }
    total += value;
    if (predictions) predictions->push_back(tr.model.predict(out));
    if (ex.task != Task::repetition_count) all_counts = false;
    backward(scale(loss, inv));
  }
  const double lr = all_counts ? tr.config.count_lr : tr.config.lr;
  tr.optimizer.step(lr, tr.config.grad_clip, tr.config.weight_decay);
  return total / static_cast<double>(batch.size());
}

}  // namespace

template <class T>
double Trainer<T>::step(const std::vector<std::size_t>& batch) {
  std::vector<Example<T>> examples;
  for (auto i : batch) examples.push_back(make_example<T>(corpus, vocab, i));
  return train_on(*this, examples, nullptr, optimizer.steps());
}

template <class T>
MetricsRecord evaluate_model(const VqaModel<T>& model, const Corpus& corpus,
                             const Vocabulary& vocab, Split split, std::size_t reader_workers) {
  auto items = corpus.split_items(split);
  if (items.empty()) throw ContractError("evaluate: split '" + to_string(split) + "' has no items");
  NoGradGuard no_grad;
  OrderedLoader<Example<T>> loader(items.size(), reader_workers, 64, [&](std::size_t i) {
    return make_example<T>(corpus, vocab, items[i]);
  });
  std::vector<std::string> predictions;
  double total = 0;
  while (auto ex = loader.next()) {
    auto out = model.forward(*ex);
    total += static_cast<double>(model.loss(out, *ex).item());
    predictions.push_back(model.predict(out));
  }
  return score_predictions(corpus, items, predictions, to_string(split),
                           total / static_cast<double>(items.size()));
}

namespace {

template <class T>
std::map<std::string, std::vector<T>> snapshot(const ParamStore<T>& store) {
  std::map<std::string, std::vector<T>> out;
  for (const auto& [name, p] : store.entries()) out[name].assign(p.data().begin(), p.data().end());
  return out;
}

template <class T>
void restore(ParamStore<T>& store, const std::map<std::string, std::vector<T>>& saved) {
  for (auto& [name, p] : store.entries()) {
    const auto& v = saved.at(name);
    std::copy(v.begin(), v.end(), p.mutable_data().begin());
  }
}

template <class T>
TrainResult train_impl(const RunConfig& config, const Corpus& corpus, const MetricsSink& sink) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  Trainer<T> tr(config, corpus);
  const auto train_items = corpus.split_items(Split::train);
  if (train_items.empty()) throw ContractError("train: split 'train' has no items");
  if (corpus.split_items(Split::val).empty()) throw ContractError("train: split 'val' has no items");

  std::ofstream metrics;
  if (!config.out.empty()) {
    fs::create_directories(config.out);
    save_config((fs::path(config.out) / "config.txt").string(), config);
    metrics.open(fs::path(config.out) / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw FormatError("cannot write metrics in " + config.out);
  }
  TrainResult result;
  auto emit = [&](MetricsRecord r) {
    r.wall_clock = elapsed();
    if (metrics.is_open()) metrics << r.to_json() << '\n' << std::flush;
    if (sink) sink(r);
    result.records.push_back(r);
    return r;
  };

  double best = -1;
  std::map<std::string, std::vector<T>> best_params = snapshot(tr.model.params());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(hash_string("epoch" + std::to_string(epoch), config.seed));
    std::vector<std::size_t> order = train_items;
    std::shuffle(order.begin(), order.end(), rng);
    // Batches hold either repetition-count items or the rest, so each
    // update uses one learning rate.
    std::vector<std::vector<std::size_t>> batches;
    for (bool counts : {false, true}) {
      std::vector<std::size_t> group;
      for (auto i : order) {
        if ((corpus.items[i].task == Task::repetition_count) == counts) group.push_back(i);
      }
      for (std::size_t b = 0; b < group.size(); b += config.batch_size) {
        auto end = std::min(group.size(), b + config.batch_size);
        batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(b),
                             group.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) flat.insert(flat.end(), b.begin(), b.end());

    OrderedLoader<Example<T>> loader(flat.size(), config.reader_workers, 2 * config.batch_size,
                                     [&](std::size_t i) {
                                       auto ex = make_example<T>(corpus, tr.vocab, flat[i]);
                                       // Sampled subsets are re-drawn every epoch.
                                       ex.sampling_seed = hash_string(
                                           "epoch" + std::to_string(epoch), ex.sampling_seed);
                                       return ex;
                                     });
    std::vector<std::string> predictions;
    double loss_sum = 0;
    for (const auto& b : batches) {
      std::vector<Example<T>> examples;
      for (std::size_t j = 0; j < b.size(); ++j) examples.push_back(std::move(*loader.next()));
      loss_sum += train_on(tr, examples, &predictions, tr.optimizer.steps()) *
                  static_cast<double>(b.size());
    }
    auto fit = score_predictions(corpus, flat, predictions, "train",
                                 loss_sum / static_cast<double>(flat.size()));
    fit.epoch = epoch;
    emit(fit);

    auto val = evaluate_model(tr.model, corpus, tr.vocab, Split::val, config.reader_workers);
    val.epoch = epoch;
    val = emit(val);
    if (val.accuracy > best) {
      best = val.accuracy;
      result.best_epoch = epoch;
      result.best_val = val;
      best_params = snapshot(tr.model.params());
    }
  }

  restore(tr.model.params(), best_params);
  if (!config.out.empty()) {
    save_checkpoint((fs::path(config.out) / "checkpoint.bin").string(), tr.model.params(),
                    config_hash(config, tr.vocab));
  }
  if (!corpus.split_items(Split::test).empty()) {
    auto test = evaluate_model(tr.model, corpus, tr.vocab, Split::test, config.reader_workers);
    test.epoch = result.best_epoch;
    result.test = emit(test);
  }
  result.seconds = elapsed();
  return result;
}

}  // namespace

TrainResult train(const RunConfig& config, const Corpus& corpus, const MetricsSink& sink) {
  config.validate();
  if (config.precision == Precision::f64) return train_impl<double>(config, corpus, sink);
  return train_impl<float>(config, corpus, sink);
}

namespace {

template <class T>
MetricsRecord evaluate_impl(const RunConfig& config, const std::string& checkpoint,
                            const Corpus& corpus, Split split) {
  auto vocab = corpus_vocabulary(corpus);
  const std::size_t channels = corpus.volumes.empty() ? channel::kCount
                                                      : corpus.volumes.front().channels;
  VqaModel<T> model(config.model_config(channels), vocab, config.seed);
  load_checkpoint(checkpoint, model.params(), config_hash(config, vocab));
  return evaluate_model(model, corpus, vocab, split, config.reader_workers);
}

}  // namespace

MetricsRecord evaluate(const std::string& checkpoint, const Corpus& corpus, Split split) {
  namespace fs = std::filesystem;
  auto config_path = fs::path(checkpoint).parent_path() / "config.txt";
  RunConfig config = load_config(config_path.string());
  config.validate();
  if (config.precision == Precision::f64) {
    return evaluate_impl<double>(config, checkpoint, corpus, split);
  }
  return evaluate_impl<float>(config, checkpoint, corpus, split);
}

std::vector<AblationRow> ablate(const RunConfig& base, const Corpus& corpus,
                                std::ostream* progress) {
  namespace fs = std::filesystem;
  std::vector<AblationRow> rows;
  for (Variant v : kVariants) {
    RunConfig cfg = base;
    cfg.variant = v;
    if (!base.out.empty()) cfg.out = (fs::path(base.out) / to_string(v)).string();
    auto sink = [&](const MetricsRecord& r) {
      if (progress) {
        *progress << to_string(v) << " epoch " << r.epoch << " " << r.split << " acc "
                  << std::fixed << std::setprecision(4) << r.accuracy << " temporal "
                  << r.temporal_accuracy << " loss " << r.loss << " (" << std::setprecision(1)
                  << r.wall_clock << "s)\n"
                  << std::flush;
      }
    };
    rows.push_back({v, train(cfg, corpus, sink)});
  }
  if (!base.out.empty()) {
    fs::create_directories(base.out);
    std::ofstream table(fs::path(base.out) / "ablation.md");
    table << ablation_table(rows);
    std::ofstream lines(fs::path(base.out) / "ablation.jsonl");
    for (const auto& row : rows) {
      json j = json::parse(row.result.test.to_json());
      j["variant"] = to_string(row.variant);
      j["best_epoch"] = row.result.best_epoch;
      j["seconds"] = row.result.seconds;
      lines << j.dump() << '\n';
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "| variant | temporal acc | overall acc | action-order | repetition-count | count MSE | "
         "best epoch | seconds |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  out << std::fixed;
  for (const auto& row : rows) {
    const auto& t = row.result.test;
    auto task = [&](const char* name) {
      auto it = t.task_accuracy.find(name);
      std::ostringstream s;
      s << std::fixed << std::setprecision(4);
      if (it == t.task_accuracy.end()) {
        s << "-";
      } else {
        s << it->second;
      }
      return s.str();
    };
    out << "| " << to_string(row.variant) << " | " << std::setprecision(4) << t.temporal_accuracy
        << " | " << t.accuracy << " | " << task("action-order") << " | "
        << task("repetition-count") << " | ";
    if (t.count_mse) {
      out << *t.count_mse;
    } else {
      out << "-";
    }
    out << " | " << row.result.best_epoch << " | " << std::setprecision(1) << row.result.seconds
        << " |\n";
  }
  return out.str();
}

template class Adam<float>;
template class Adam<double>;
template struct Trainer<float>;
template struct Trainer<double>;
template void save_checkpoint(const std::string&, const ParamStore<float>&, std::uint64_t);
template void save_checkpoint(const std::string&, const ParamStore<double>&, std::uint64_t);
template void load_checkpoint(const std::string&, ParamStore<float>&, std::uint64_t);
template void load_checkpoint(const std::string&, ParamStore<double>&, std::uint64_t);
template MetricsRecord evaluate_model(const VqaModel<float>&, const Corpus&, const Vocabulary&,
                                      Split, std::size_t);
template MetricsRecord evaluate_model(const VqaModel<double>&, const Corpus&, const Vocabulary&,
                                      Split, std::size_t);

}  // namespace dpvqa
