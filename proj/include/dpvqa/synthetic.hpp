#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpvqa/fvol.hpp"

namespace dpvqa {

enum class ShapeKind { cube, sphere, cylinder };
enum class Color { red, green, blue, yellow, purple, gray };
enum class SizeKind { small, big };
enum class Action { move_left, move_right, move_up, move_down, rotate, stop };

inline constexpr std::array<ShapeKind, 3> kShapes{ShapeKind::cube, ShapeKind::sphere,
                                                  ShapeKind::cylinder};
inline constexpr std::array<Color, 6> kColors{Color::red,    Color::green,  Color::blue,
                                              Color::yellow, Color::purple, Color::gray};
inline constexpr std::array<SizeKind, 2> kSizes{SizeKind::small, SizeKind::big};
inline constexpr std::array<Action, 6> kActions{Action::move_left, Action::move_right,
                                                Action::move_up,   Action::move_down,
                                                Action::rotate,    Action::stop};

std::string to_string(ShapeKind s);
std::string to_string(Color c);
std::string to_string(SizeKind s);
std::string to_string(Action a);  // answer label, e.g. "move-left"
ShapeKind parse_shape(const std::string& s);
Color parse_color(const std::string& s);
SizeKind parse_size(const std::string& s);
Action parse_action(const std::string& s);

// Channel layout of a rendered grid cell.
namespace channel {
inline constexpr std::size_t kShape = 0;       // 3 one-hot
inline constexpr std::size_t kColor = 3;       // 6 one-hot
inline constexpr std::size_t kSize = 9;        // 1 = big
inline constexpr std::size_t kHorizontal = 10; // +1 right, −1 left
inline constexpr std::size_t kVertical = 11;   // +1 up, −1 down
inline constexpr std::size_t kRotate = 12;
inline constexpr std::size_t kStop = 13;
inline constexpr std::size_t kOccupied = 14;
inline constexpr std::size_t kCount = 16;      // one padding channel
}  // namespace channel

struct SceneObject {
  std::size_t id = 0;
  ShapeKind shape = ShapeKind::cube;
  Color color = Color::red;
  SizeKind size = SizeKind::small;
  std::size_t x = 0;  // position before any event
  std::size_t y = 0;
};

// An action repeated `repeats` times. Repetition j is visible at frame
// start + 2j (the active frame, where moves take effect) followed by a rest
// frame, so the event spans [start, end) with end = start + 2·repeats.
struct SceneEvent {
  std::size_t object = 0;
  Action action = Action::stop;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t repeats = 1;

  std::size_t active_frame(std::size_t j) const { return start + 2 * j; }
};

struct SceneProgram {
  std::uint64_t seed = 0;
  std::size_t width = 4;
  std::size_t height = 4;
  std::size_t frames = 40;
  std::vector<SceneObject> objects;
  std::vector<SceneEvent> events;  // sorted by start, globally non-overlapping

  const SceneObject& object_by_color(Color c) const;
  bool has_color(Color c) const;
};

struct SceneConfig {
  std::size_t width = 4;
  std::size_t height = 4;
  std::size_t frames = 40;
  std::size_t min_objects = 2;
  std::size_t max_objects = 4;
  std::size_t min_events = 3;
  std::size_t max_events = 8;
  std::size_t max_repeats = 4;
};

/// Pure function of (seed, config).
SceneProgram generate_scene(std::uint64_t seed, const SceneConfig& config = {});

/// Object positions at every frame, [frame][object] -> (x, y).
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> object_tracks(
    const SceneProgram& scene);

/// Symbolic rendering onto a W×H grid with the channel layout above.
VolumeData render_features(const SceneProgram& scene);

// Recovered from a rendered volume without looking at the program.
struct DecodedScene {
  struct Pulse {
    std::size_t frame;
    std::size_t object;  // index into objects
    Action action;
  };
  std::vector<SceneObject> objects;                                        // initial state
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> positions; // [frame][object]
  std::vector<Pulse> pulses;                                               // in frame order
};

DecodedScene decode_features(const VolumeData& volume);

/// Rebuilds a scene program from a decoded volume (events from pulse runs).
SceneProgram scene_from_decoded(const DecodedScene& decoded, std::size_t width,
                                std::size_t height, std::size_t frames);

enum class Task { exist, count, attribute_compare, query, action_order, repetition_count };

std::string to_string(Task t);
Task parse_task(const std::string& s);
bool is_temporal(Task t);

enum class Template {
  exist,         // is there a {size} {color} {shape}
  count,         // how many {shape}s are there
  compare,       // is the {c1} object the same {shape|size} as the {c2} object
  query_shape,   // what shape is the {c} object
  query_size,    // what size is the {c} object
  order_action,  // what does the {c} object do {after|before} it {a}
  order_color,   // what color is the object that {a2} {after|before} the {c1} object {a1}
  repeat_count,  // how many times does the {c} object {a}
};

inline constexpr std::array<Template, 8> kTemplates{
    Template::exist,       Template::count,        Template::compare,
    Template::query_shape, Template::query_size,   Template::order_action,
    Template::order_color, Template::repeat_count};

std::string to_string(Template t);
Template parse_template(const std::string& s);
Task task_of(Template t);
/// Every answer the template can produce.
std::vector<std::string> answer_domain(Template t);

// Structured form of a templated question.
struct QuestionProgram {
  Template kind = Template::exist;
  Color color = Color::red;
  Color other_color = Color::red;
  ShapeKind shape = ShapeKind::cube;
  SizeKind size = SizeKind::small;
  Action action = Action::stop;
  Action other_action = Action::stop;
  bool after = true;
  bool compare_shape = true;

  bool operator==(const QuestionProgram&) const = default;
};

std::vector<std::string> question_tokens(const QuestionProgram& q);
/// Inverse of question_tokens; FormatError on anything the templates cannot produce.
QuestionProgram parse_question(const std::vector<std::string>& tokens);

/// Symbolic evaluation; nullopt when the question has no defined answer for the scene.
std::optional<std::string> oracle_answer(const SceneProgram& scene, const QuestionProgram& q);

struct QAItem {
  std::size_t scene_id = 0;
  Task task = Task::exist;
  Template kind = Template::exist;
  std::vector<std::string> tokens;
  std::string answer;  // label, or the decimal count for repetition_count
};

// Running answer counts per template, used to steer generation toward a
// uniform answer distribution.
class AnswerBalance {
 public:
  std::size_t count(Template t, const std::string& answer) const;
  void record(Template t, const std::string& answer);

 private:
  std::map<std::pair<Template, std::string>, std::size_t> counts_;
};

/// Instantiates the template on the scene. Returns nullopt (skip) when the
/// template is inapplicable. With `balance`, the least frequent available
/// answer is chosen; otherwise answers are drawn uniformly.
std::optional<QAItem> generate_question(const SceneProgram& scene, std::size_t scene_id,
                                        Template kind, std::uint64_t seed,
                                        const AnswerBalance* balance = nullptr);

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct CorpusConfig {
  std::uint64_t seed = 7;
  std::size_t items = 8000;
  std::size_t questions_per_scene = 8;
  SceneConfig scene;
};

inline constexpr const char* kGeneratorVersion = "dpvqa-synth-1";

struct Corpus {
  std::string generator_version = kGeneratorVersion;
  std::uint64_t seed = 0;
  std::vector<SceneProgram> scenes;
  std::vector<VolumeData> volumes;  // rendered, one per scene
  std::vector<Split> scene_split;   // 70/10/20 over scenes
  std::vector<QAItem> items;

  std::vector<std::size_t> split_items(Split s) const;
};

/// Fraction of temporal items a per-template majority-class predictor gets right.
double temporal_majority_accuracy(const std::vector<QAItem>& items);

inline constexpr double kAntiBiasThreshold = 0.6;

/// Throws ContractError when temporal_majority_accuracy(items) ≥ kAntiBiasThreshold.
void enforce_anti_bias(const std::vector<QAItem>& items);

/// Generates scenes, renders them and instantiates questions; throws
/// ContractError when the anti-bias gate fails.
Corpus build_corpus(const CorpusConfig& config);

/// Directory layout: manifest.json, scenes.jsonl, qa.jsonl, scenes/scene_NNNNN.fvol.
void write_corpus(const std::string& dir, const Corpus& corpus, std::size_t reader_workers = 1);
Corpus read_corpus(const std::string& dir, std::size_t reader_workers = 1);

std::string scene_to_json(const SceneProgram& scene);
SceneProgram scene_from_json(const std::string& line);
std::string item_to_json(const QAItem& item);
QAItem item_from_json(const std::string& line);

}  // namespace dpvqa
