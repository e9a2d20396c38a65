#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dpvqa/synthetic.hpp"
#include "oracles.hpp"

using namespace dpvqa;

namespace {

const Corpus& default_corpus() {
  static const Corpus corpus = build_corpus(CorpusConfig{});
  return corpus;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Scene, PureFunctionOfSeed) {
  for (std::uint64_t seed : {0ull, 1ull, 77ull}) {
    EXPECT_EQ(scene_to_json(generate_scene(seed)), scene_to_json(generate_scene(seed)));
  }
  EXPECT_NE(scene_to_json(generate_scene(1)), scene_to_json(generate_scene(2)));
}

TEST(Scene, InvariantsHoldOverManySeeds) {
  const SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto s = generate_scene(seed, cfg);
    ASSERT_GE(s.objects.size(), 2u);
    ASSERT_LE(s.objects.size(), 4u);
    ASSERT_GE(s.events.size(), 3u);
    ASSERT_LE(s.events.size(), 8u);
    EXPECT_EQ(s.frames, 40u);
    std::set<Color> colors;
    for (const auto& o : s.objects) colors.insert(o.color);
    EXPECT_EQ(colors.size(), s.objects.size()) << seed;
    std::map<std::size_t, Action> last_action;
    std::size_t prev_end = 0;
    for (const auto& e : s.events) {
      ASSERT_LT(e.object, s.objects.size());
      EXPECT_GE(e.repeats, 1u);
      EXPECT_LE(e.repeats, cfg.max_repeats);
      EXPECT_EQ(e.end, e.start + 2 * e.repeats);
      EXPECT_LE(e.end, s.frames) << seed;
      EXPECT_GE(e.start, prev_end) << seed;  // globally sequential
      prev_end = e.end;
      auto it = last_action.find(e.object);
      if (it != last_action.end()) EXPECT_NE(it->second, e.action) << seed;
      last_action[e.object] = e.action;
    }
    auto tracks = object_tracks(s);
    ASSERT_EQ(tracks.size(), s.frames);
    for (const auto& frame : tracks) {
      std::set<std::pair<std::size_t, std::size_t>> cells;
      for (auto [x, y] : frame) {
        EXPECT_LT(x, s.width);
        EXPECT_LT(y, s.height);
        cells.insert({x, y});
      }
      EXPECT_EQ(cells.size(), frame.size()) << "collision, seed " << seed;
    }
  }
}

TEST(Render, EmptySceneIsAllZero) {
  SceneProgram s;
  auto v = render_features(s);
  EXPECT_EQ(v.channels, channel::kCount);
  EXPECT_EQ(v.values.size(), 40u * 16u * 16u);
  for (float x : v.values) EXPECT_EQ(x, 0.0f);
}

TEST(Render, StaticObjectGivesIdenticalFrames) {
  SceneProgram s;
  s.objects.push_back({0, ShapeKind::sphere, Color::blue, SizeKind::big, 1, 2});
  auto v = render_features(s);
  const std::size_t fs = v.frame_size();
  for (std::size_t f = 1; f < v.frames; ++f) {
    for (std::size_t i = 0; i < fs; ++i) ASSERT_EQ(v.values[f * fs + i], v.values[i]);
  }
  EXPECT_EQ(v.at(0, 1, 2, channel::kOccupied), 1.0f);
  EXPECT_EQ(v.at(0, 1, 2, channel::kSize), 1.0f);
  EXPECT_EQ(v.at(0, 1, 2, channel::kColor + static_cast<std::size_t>(Color::blue)), 1.0f);
  EXPECT_EQ(v.at(0, 0, 0, channel::kOccupied), 0.0f);
}

TEST(Render, MoveRightShiftsOccupancyOneCellPerRepetition) {
  SceneProgram s;
  s.objects.push_back({0, ShapeKind::cube, Color::red, SizeKind::small, 0, 1});
  s.events.push_back({0, Action::move_right, 4, 10, 3});
  auto decoded = decode_features(render_features(s));
  auto tracks = object_tracks(s);
  ASSERT_EQ(decoded.positions.size(), 40u);
  for (std::size_t f = 0; f < 40; ++f) EXPECT_EQ(decoded.positions[f][0], tracks[f][0]) << f;
  EXPECT_EQ(decoded.positions[0][0].first, 0u);
  EXPECT_EQ(decoded.positions[39][0].first, 3u);
  EXPECT_EQ(decoded.positions[39][0].second, 1u);
  ASSERT_EQ(decoded.pulses.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(decoded.pulses[j].frame, 4 + 2 * j);
    EXPECT_EQ(decoded.pulses[j].action, Action::move_right);
  }
}

TEST(Render, DecodeRecoversTheProgram) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto s = generate_scene(seed);
    auto decoded = decode_features(render_features(s));
    auto back = scene_from_decoded(decoded, s.width, s.height, s.frames);
    ASSERT_EQ(back.objects.size(), s.objects.size());
    std::map<std::size_t, std::size_t> to_original;
    for (const auto& o : back.objects) {
      const auto& orig = s.object_by_color(o.color);
      EXPECT_EQ(o.shape, orig.shape);
      EXPECT_EQ(o.size, orig.size);
      EXPECT_EQ(o.x, orig.x);
      EXPECT_EQ(o.y, orig.y);
      to_original[o.id] = orig.id;
    }
    ASSERT_EQ(back.events.size(), s.events.size()) << seed;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      EXPECT_EQ(to_original[back.events[i].object], s.events[i].object);
      EXPECT_EQ(back.events[i].action, s.events[i].action);
      EXPECT_EQ(back.events[i].start, s.events[i].start);
      EXPECT_EQ(back.events[i].end, s.events[i].end);
      EXPECT_EQ(back.events[i].repeats, s.events[i].repeats);
    }
  }
  VolumeData bad;
  bad.channels = 3;
  EXPECT_THROW(decode_features(bad), FormatError);
}

TEST(Questions, ParserRoundTripsEveryTemplate) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto scene = generate_scene(seed);
    for (Template t : kTemplates) {
      auto item = generate_question(scene, 0, t, seed * 31 + 7);
      if (!item) continue;
      auto q = parse_question(item->tokens);
      EXPECT_EQ(q.kind, t);
      EXPECT_EQ(question_tokens(q), item->tokens);
      EXPECT_EQ(task_of(t), item->task);
    }
  }
  EXPECT_THROW(parse_question({"why", "is", "the", "sky", "blue"}), FormatError);
}

TEST(Questions, SimpleOracleCases) {
  SceneProgram s;
  s.objects.push_back({0, ShapeKind::cube, Color::red, SizeKind::small, 0, 0});
  s.objects.push_back({1, ShapeKind::sphere, Color::green, SizeKind::big, 3, 3});
  s.events.push_back({0, Action::rotate, 0, 4, 2});
  s.events.push_back({1, Action::stop, 5, 7, 1});
  s.events.push_back({0, Action::move_right, 8, 10, 1});

  QuestionProgram q;
  q.kind = Template::exist;
  q.color = Color::blue;
  q.shape = ShapeKind::cube;
  q.size = SizeKind::small;
  EXPECT_EQ(oracle_answer(s, q), "no");
  q.color = Color::red;
  EXPECT_EQ(oracle_answer(s, q), "yes");

  q = {};
  q.kind = Template::query_shape;
  q.color = Color::green;
  EXPECT_EQ(oracle_answer(s, q), "sphere");

  q = {};
  q.kind = Template::order_action;
  q.color = Color::red;
  q.action = Action::rotate;
  q.after = true;
  EXPECT_EQ(oracle_answer(s, q), "move-right");
  q.action = Action::move_right;
  q.after = false;
  EXPECT_EQ(oracle_answer(s, q), "rotate");

  q = {};
  q.kind = Template::order_color;
  q.color = Color::red;
  q.action = Action::rotate;
  q.other_action = Action::stop;
  q.after = true;
  EXPECT_EQ(oracle_answer(s, q), "green");

  q = {};
  q.kind = Template::repeat_count;
  q.color = Color::red;
  q.action = Action::rotate;
  EXPECT_EQ(oracle_answer(s, q), "2");

  q = {};
  q.kind = Template::count;
  q.shape = ShapeKind::cylinder;
  EXPECT_EQ(oracle_answer(s, q), "0");
}

TEST(Corpus, DefaultShapeAndSplit) {
  const auto& c = default_corpus();
  EXPECT_EQ(c.generator_version, kGeneratorVersion);
  EXPECT_EQ(c.items.size(), 8000u);
  EXPECT_EQ(c.scenes.size(), 1000u);
  EXPECT_EQ(c.volumes.size(), 1000u);
  std::map<Split, std::size_t> scenes;
  for (auto s : c.scene_split) ++scenes[s];
  EXPECT_EQ(scenes[Split::train], 700u);
  EXPECT_EQ(scenes[Split::val], 100u);
  EXPECT_EQ(scenes[Split::test], 200u);
  std::size_t temporal = 0;
  std::set<Task> tasks;
  for (const auto& it : c.items) {
    temporal += is_temporal(it.task);
    tasks.insert(it.task);
  }
  EXPECT_EQ(tasks.size(), 6u);
  EXPECT_NEAR(static_cast<double>(temporal) / 8000.0, 0.5, 0.02);
  const auto total = c.split_items(Split::train).size() + c.split_items(Split::val).size() +
                     c.split_items(Split::test).size();
  EXPECT_EQ(total, 8000u);
}

TEST(Corpus, RegenerationIsBitIdentical) {
  CorpusConfig cfg;
  cfg.items = 800;
  cfg.seed = 3;
  auto a = build_corpus(cfg), b = build_corpus(cfg);
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(item_to_json(a.items[i]), item_to_json(b.items[i]));
  }
  for (std::size_t s = 0; s < a.volumes.size(); ++s) EXPECT_EQ(a.volumes[s].values, b.volumes[s].values);
  EXPECT_EQ(a.scene_split, b.scene_split);
}

TEST(Corpus, StoredAnswersMatchOracleAndRenderedScene) {
  const auto& c = default_corpus();
  for (const auto& it : c.items) {
    const auto& scene = c.scenes[it.scene_id];
    const auto q = parse_question(it.tokens);
    ASSERT_EQ(oracle_answer(scene, q), it.answer);
    const auto decoded = scene_from_decoded(decode_features(c.volumes[it.scene_id]), scene.width,
                                            scene.height, scene.frames);
    ASSERT_EQ(oracle_answer(decoded, q), it.answer);
  }
}

TEST(Corpus, TimelineScanAgrees) {
  const auto& c = default_corpus();
  for (std::size_t i = 0; i < c.items.size(); i += 8) {
    const auto& it = c.items[i];
    oracle::Timeline timeline(c.volumes[it.scene_id]);
    EXPECT_EQ(timeline.answer(parse_question(it.tokens)), it.answer) << i;
  }
}

TEST(Corpus, AnswersNearUniformPerTemplate) {
  CorpusConfig cfg;
  cfg.items = 10000;
  auto c = build_corpus(cfg);
  std::map<Template, std::map<std::string, std::size_t>> freq;
  for (const auto& it : c.items) ++freq[it.kind][it.answer];
  for (const auto& [t, answers] : freq) {
    std::size_t n = 0;
    for (const auto& [a, k] : answers) n += k;
    const double uniform = static_cast<double>(n) / static_cast<double>(answers.size());
    for (const auto& [a, k] : answers) {
      EXPECT_LE(static_cast<double>(k), 1.5 * uniform) << to_string(t) << " " << a;
      EXPECT_GE(static_cast<double>(k), uniform / 1.5) << to_string(t) << " " << a;
    }
  }
}

TEST(Corpus, AntiBiasGate) {
  EXPECT_LT(temporal_majority_accuracy(default_corpus().items), kAntiBiasThreshold);
  std::vector<QAItem> biased;
  for (int i = 0; i < 10; ++i) {
    QAItem it;
    it.task = Task::action_order;
    it.kind = Template::order_action;
    it.answer = i < 6 ? "stop" : "rotate";
    biased.push_back(it);
  }
  EXPECT_DOUBLE_EQ(temporal_majority_accuracy(biased), 0.6);
  EXPECT_THROW(enforce_anti_bias(biased), ContractError);
  biased[0].answer = "rotate";
  biased[1].answer = "move-left";
  EXPECT_NO_THROW(enforce_anti_bias(biased));
}

TEST(Corpus, WriteReadRoundTrip) {
  CorpusConfig cfg;
  cfg.items = 400;
  auto c = build_corpus(cfg);
  auto dir = temp_dir("dpvqa_corpus_rt");
  write_corpus(dir.string(), c, 2);
  auto r = read_corpus(dir.string(), 3);
  EXPECT_EQ(r.seed, c.seed);
  ASSERT_EQ(r.items.size(), c.items.size());
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    EXPECT_EQ(item_to_json(r.items[i]), item_to_json(c.items[i]));
  }
  ASSERT_EQ(r.scenes.size(), c.scenes.size());
  for (std::size_t s = 0; s < c.scenes.size(); ++s) {
    EXPECT_EQ(scene_to_json(r.scenes[s]), scene_to_json(c.scenes[s]));
    EXPECT_EQ(r.volumes[s].values, c.volumes[s].values);
  }
  EXPECT_EQ(r.scene_split, c.scene_split);
  std::ifstream qa(dir / "qa.jsonl");
  std::string line;
  std::getline(qa, line);
  EXPECT_NE(line.find("\"scene_id\""), std::string::npos);

  {
    std::ofstream out(dir / "manifest.json");
    out << R"({"generator_version":"other","seed":7})";
  }
  EXPECT_THROW(read_corpus(dir.string()), FormatError);
  EXPECT_THROW(read_corpus((dir / "missing").string()), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Corpus, NamesRoundTrip) {
  for (auto a : kActions) EXPECT_EQ(parse_action(to_string(a)), a);
  for (auto c : kColors) EXPECT_EQ(parse_color(to_string(c)), c);
  for (auto s : kShapes) EXPECT_EQ(parse_shape(to_string(s)), s);
  for (auto s : kSizes) EXPECT_EQ(parse_size(to_string(s)), s);
  for (auto t : kTemplates) EXPECT_EQ(parse_template(to_string(t)), t);
  EXPECT_EQ(parse_task("repetition-count"), Task::repetition_count);
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_THROW(parse_color("mauve"), FormatError);
}
