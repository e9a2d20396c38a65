#include "dpvqa/synthetic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dpvqa/errors.hpp"
#include "dpvqa/param_store.hpp"

namespace dpvqa {

using nlohmann::json;

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw FormatError(std::string("unknown ") + what + " '" + s + "'");
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool is_move(Action a) {
  return a == Action::move_left || a == Action::move_right || a == Action::move_up ||
         a == Action::move_down;
}

std::pair<long, long> delta(Action a) {
  switch (a) {
    case Action::move_left: return {-1, 0};
    case Action::move_right: return {1, 0};
    case Action::move_up: return {0, 1};
    case Action::move_down: return {0, -1};
    default: return {0, 0};
  }
}

// Third-person phrase ("moves left") and base form ("move left").
std::vector<std::string> action_phrase(Action a, bool third_person) {
  std::string verb;
  switch (a) {
    case Action::rotate: return {third_person ? "rotates" : "rotate"};
    case Action::stop: return {third_person ? "stops" : "stop"};
    case Action::move_left: verb = "left"; break;
    case Action::move_right: verb = "right"; break;
    case Action::move_up: verb = "up"; break;
    case Action::move_down: verb = "down"; break;
  }
  return {third_person ? "moves" : "move", verb};
}

// Parses an action phrase at tokens[pos]; advances pos.
Action parse_action_phrase(const std::vector<std::string>& tokens, std::size_t& pos,
                           bool third_person) {
  auto fail = [&]() -> Action {
    throw FormatError("cannot parse action phrase at token " + std::to_string(pos));
  };
  if (pos >= tokens.size()) return fail();
  const std::string& w = tokens[pos];
  if (w == (third_person ? "rotates" : "rotate")) {
    ++pos;
    return Action::rotate;
  }
  if (w == (third_person ? "stops" : "stop")) {
    ++pos;
    return Action::stop;
  }
  if (w == (third_person ? "moves" : "move") && pos + 1 < tokens.size()) {
    const std::string& dir = tokens[pos + 1];
    pos += 2;
    if (dir == "left") return Action::move_left;
    if (dir == "right") return Action::move_right;
    if (dir == "up") return Action::move_up;
    if (dir == "down") return Action::move_down;
  }
  return fail();
}

std::string plural(ShapeKind s) { return to_string(s) + "s"; }

}  // namespace

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::cube: return "cube";
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cylinder: return "cylinder";
  }
  return "?";
}

std::string to_string(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
    case Color::yellow: return "yellow";
    case Color::purple: return "purple";
    case Color::gray: return "gray";
  }
  return "?";
}

std::string to_string(SizeKind s) { return s == SizeKind::small ? "small" : "big"; }

std::string to_string(Action a) {
  switch (a) {
    case Action::move_left: return "move-left";
    case Action::move_right: return "move-right";
    case Action::move_up: return "move-up";
    case Action::move_down: return "move-down";
    case Action::rotate: return "rotate";
    case Action::stop: return "stop";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& s) { return parse_enum(s, kShapes, "shape"); }
Color parse_color(const std::string& s) { return parse_enum(s, kColors, "color"); }
SizeKind parse_size(const std::string& s) { return parse_enum(s, kSizes, "size"); }
Action parse_action(const std::string& s) { return parse_enum(s, kActions, "action"); }

const SceneObject& SceneProgram::object_by_color(Color c) const {
  for (const auto& o : objects) {
    if (o.color == c) return o;
  }
  throw ContractError("scene has no " + to_string(c) + " object");
}

bool SceneProgram::has_color(Color c) const {
  return std::any_of(objects.begin(), objects.end(), [c](const auto& o) { return o.color == c; });
}

SceneProgram generate_scene(std::uint64_t seed, const SceneConfig& config) {
  if (config.width * config.height < config.max_objects) {
    throw ContractError("generate_scene: grid too small for the object count");
  }
  std::mt19937_64 rng(seed);
  while (true) {
    SceneProgram scene;
    scene.seed = seed;
    scene.width = config.width;
    scene.height = config.height;
    scene.frames = config.frames;

    const std::size_t n_objects = uniform(rng, config.min_objects, config.max_objects);
    std::vector<Color> colors(kColors.begin(), kColors.end());
    std::shuffle(colors.begin(), colors.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t x = 0; x < config.width; ++x) {
      for (std::size_t y = 0; y < config.height; ++y) cells.emplace_back(x, y);
    }
    std::shuffle(cells.begin(), cells.end(), rng);
    for (std::size_t i = 0; i < n_objects; ++i) {
      SceneObject o;
      o.id = i;
      o.color = colors[i];
      o.shape = kShapes[uniform(rng, 0, kShapes.size() - 1)];
      o.size = kSizes[uniform(rng, 0, 1)];
      o.x = cells[i].first;
      o.y = cells[i].second;
      scene.objects.push_back(o);
    }

    std::vector<std::pair<long, long>> pos;
    for (const auto& o : scene.objects) pos.emplace_back(o.x, o.y);
    std::vector<std::optional<Action>> last(n_objects);
    const std::size_t target = uniform(rng, config.min_events, config.max_events);
    std::size_t t = uniform(rng, 0, 2);
    while (scene.events.size() < target) {
      bool placed = false;
      for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
        const std::size_t obj = uniform(rng, 0, n_objects - 1);
        const Action action = kActions[uniform(rng, 0, kActions.size() - 1)];
        const std::size_t repeats = uniform(rng, 1, config.max_repeats);
        if (last[obj] == action) continue;
        if (t + 2 * repeats > config.frames) continue;
        if (is_move(action)) {
          auto [dx, dy] = delta(action);
          bool ok = true;
          for (std::size_t j = 1; j <= repeats && ok; ++j) {
            long nx = pos[obj].first + dx * static_cast<long>(j);
            long ny = pos[obj].second + dy * static_cast<long>(j);
            if (nx < 0 || ny < 0 || nx >= static_cast<long>(config.width) ||
                ny >= static_cast<long>(config.height)) {
              ok = false;
            }
            for (std::size_t k = 0; k < n_objects && ok; ++k) {
              if (k != obj && pos[k].first == nx && pos[k].second == ny) ok = false;
            }
          }
          if (!ok) continue;
          pos[obj].first += dx * static_cast<long>(repeats);
          pos[obj].second += dy * static_cast<long>(repeats);
        }
        scene.events.push_back({obj, action, t, t + 2 * repeats, repeats});
        last[obj] = action;
        t += 2 * repeats + uniform(rng, 0, 2);
        placed = true;
      }
      if (!placed) break;
    }
    if (scene.events.size() >= config.min_events) return scene;
  }
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> object_tracks(
    const SceneProgram& scene) {
  std::vector<std::pair<long, long>> pos;
  for (const auto& o : scene.objects) pos.emplace_back(o.x, o.y);
  // Moves take effect at their active frames.
  std::vector<std::vector<std::pair<std::size_t, long>>> moves_at(scene.frames);
  for (std::size_t e = 0; e < scene.events.size(); ++e) {
    const auto& ev = scene.events[e];
    if (!is_move(ev.action)) continue;
    for (std::size_t j = 0; j < ev.repeats; ++j) {
      std::size_t f = ev.active_frame(j);
      if (f < scene.frames) moves_at[f].emplace_back(ev.object, static_cast<long>(e));
    }
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> tracks(scene.frames);
  for (std::size_t f = 0; f < scene.frames; ++f) {
    for (auto [obj, e] : moves_at[f]) {
      auto [dx, dy] = delta(scene.events[static_cast<std::size_t>(e)].action);
      pos[obj].first += dx;
      pos[obj].second += dy;
    }
    for (const auto& p : pos) {
      tracks[f].emplace_back(static_cast<std::size_t>(p.first), static_cast<std::size_t>(p.second));
    }
  }
  return tracks;
}

VolumeData render_features(const SceneProgram& scene) {
  VolumeData v;
  v.frames = static_cast<std::uint32_t>(scene.frames);
  v.width = static_cast<std::uint32_t>(scene.width);
  v.height = static_cast<std::uint32_t>(scene.height);
  v.channels = channel::kCount;
  v.values.assign(static_cast<std::size_t>(v.frames) * v.frame_size(), 0.0f);
  if (scene.objects.empty()) return v;

  auto tracks = object_tracks(scene);
  std::vector<std::vector<std::optional<Action>>> active(
      scene.frames, std::vector<std::optional<Action>>(scene.objects.size()));
  for (const auto& ev : scene.events) {
    for (std::size_t j = 0; j < ev.repeats; ++j) {
      std::size_t f = ev.active_frame(j);
      if (f < scene.frames) active[f][ev.object] = ev.action;
    }
  }
  for (std::size_t f = 0; f < scene.frames; ++f) {
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
      const auto& o = scene.objects[k];
      auto [x, y] = tracks[f][k];
      v.at(f, x, y, channel::kShape + static_cast<std::size_t>(o.shape)) = 1.0f;
      v.at(f, x, y, channel::kColor + static_cast<std::size_t>(o.color)) = 1.0f;
      v.at(f, x, y, channel::kSize) = o.size == SizeKind::big ? 1.0f : 0.0f;
      v.at(f, x, y, channel::kOccupied) = 1.0f;
      if (auto a = active[f][k]) {
        switch (*a) {
          case Action::move_left: v.at(f, x, y, channel::kHorizontal) = -1.0f; break;
          case Action::move_right: v.at(f, x, y, channel::kHorizontal) = 1.0f; break;
          case Action::move_up: v.at(f, x, y, channel::kVertical) = 1.0f; break;
          case Action::move_down: v.at(f, x, y, channel::kVertical) = -1.0f; break;
          case Action::rotate: v.at(f, x, y, channel::kRotate) = 1.0f; break;
          case Action::stop: v.at(f, x, y, channel::kStop) = 1.0f; break;
        }
      }
    }
  }
  return v;
}

DecodedScene decode_features(const VolumeData& v) {
  if (v.channels != channel::kCount) {
    throw FormatError("decode_features: expected " + std::to_string(channel::kCount) +
                      " channels, got " + std::to_string(v.channels));
  }
  DecodedScene out;
  auto argmax = [&](std::size_t f, std::size_t x, std::size_t y, std::size_t first,
                    std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (v.at(f, x, y, first + i) > v.at(f, x, y, first + best)) best = i;
    }
    return best;
  };
  // Colors are unique within a scene, so they identify objects across frames.
  std::map<Color, std::size_t> by_color;
  out.positions.resize(v.frames);
  for (std::size_t f = 0; f < v.frames; ++f) {
    for (std::size_t x = 0; x < v.width; ++x) {
      for (std::size_t y = 0; y < v.height; ++y) {
        if (v.at(f, x, y, channel::kOccupied) < 0.5f) continue;
        Color c = kColors[argmax(f, x, y, channel::kColor, kColors.size())];
        auto it = by_color.find(c);
        if (it == by_color.end()) {
          SceneObject o;
          o.id = out.objects.size();
          o.color = c;
          o.shape = kShapes[argmax(f, x, y, channel::kShape, kShapes.size())];
          o.size = v.at(f, x, y, channel::kSize) > 0.5f ? SizeKind::big : SizeKind::small;
          o.x = x;
          o.y = y;
          it = by_color.emplace(c, out.objects.size()).first;
          out.objects.push_back(o);
          for (std::size_t g = 0; g < f; ++g) out.positions[g].emplace_back(x, y);
        }
        if (out.positions[f].size() <= it->second) out.positions[f].resize(it->second + 1);
        out.positions[f][it->second] = {x, y};
        std::optional<Action> a;
        float h = v.at(f, x, y, channel::kHorizontal);
        float vv = v.at(f, x, y, channel::kVertical);
        if (h < -0.5f) a = Action::move_left;
        else if (h > 0.5f) a = Action::move_right;
        else if (vv > 0.5f) a = Action::move_up;
        else if (vv < -0.5f) a = Action::move_down;
        else if (v.at(f, x, y, channel::kRotate) > 0.5f) a = Action::rotate;
        else if (v.at(f, x, y, channel::kStop) > 0.5f) a = Action::stop;
        if (a) out.pulses.push_back({f, it->second, *a});
      }
    }
  }
  // A move active at frame 0 has already been applied to the first frame.
  for (const auto& p : out.pulses) {
    if (p.frame != 0 || !is_move(p.action)) continue;
    auto [dx, dy] = delta(p.action);
    auto& o = out.objects[p.object];
    o.x = static_cast<std::size_t>(static_cast<long>(o.x) - dx);
    o.y = static_cast<std::size_t>(static_cast<long>(o.y) - dy);
  }
  return out;
}

SceneProgram scene_from_decoded(const DecodedScene& decoded, std::size_t width,
                                std::size_t height, std::size_t frames) {
  SceneProgram scene;
  scene.width = width;
  scene.height = height;
  scene.frames = frames;
  scene.objects = decoded.objects;
  for (const auto& p : decoded.pulses) {
    if (!scene.events.empty()) {
      auto& last = scene.events.back();
      if (last.object == p.object && last.action == p.action && p.frame == last.end) {
        ++last.repeats;
        last.end += 2;
        continue;
      }
    }
    scene.events.push_back({p.object, p.action, p.frame, p.frame + 2, 1});
  }
  return scene;
}

std::string to_string(Task t) {
  switch (t) {
    case Task::exist: return "exist";
    case Task::count: return "count";
    case Task::attribute_compare: return "attribute-compare";
    case Task::query: return "query";
    case Task::action_order: return "action-order";
    case Task::repetition_count: return "repetition-count";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  static constexpr std::array<Task, 6> all{Task::exist,  Task::count,        Task::attribute_compare,
                                           Task::query,  Task::action_order, Task::repetition_count};
  return parse_enum(s, all, "task");
}

bool is_temporal(Task t) { return t == Task::action_order || t == Task::repetition_count; }

std::string to_string(Template t) {
  switch (t) {
    case Template::exist: return "exist";
    case Template::count: return "count";
    case Template::compare: return "compare";
    case Template::query_shape: return "query-shape";
    case Template::query_size: return "query-size";
    case Template::order_action: return "order-action";
    case Template::order_color: return "order-color";
    case Template::repeat_count: return "repeat-count";
  }
  return "?";
}

Template parse_template(const std::string& s) { return parse_enum(s, kTemplates, "template"); }

Task task_of(Template t) {
  switch (t) {
    case Template::exist: return Task::exist;
    case Template::count: return Task::count;
    case Template::compare: return Task::attribute_compare;
    case Template::query_shape:
    case Template::query_size: return Task::query;
    case Template::order_action:
    case Template::order_color: return Task::action_order;
    case Template::repeat_count: return Task::repetition_count;
  }
  return Task::exist;
}

std::vector<std::string> answer_domain(Template t) {
  std::vector<std::string> out;
  switch (t) {
    case Template::exist:
    case Template::compare: return {"yes", "no"};
    case Template::count: return {"0", "1", "2"};
    case Template::query_shape:
      for (auto s : kShapes) out.push_back(to_string(s));
      return out;
    case Template::query_size: return {"small", "big"};
    case Template::order_action:
      for (auto a : kActions) out.push_back(to_string(a));
      return out;
    case Template::order_color:
      for (auto c : kColors) out.push_back(to_string(c));
      return out;
    case Template::repeat_count: return {"1", "2", "3", "4"};
  }
  return out;
}

std::vector<std::string> question_tokens(const QuestionProgram& q) {
  std::vector<std::string> t;
  auto append = [&t](const std::vector<std::string>& more) { t.insert(t.end(), more.begin(), more.end()); };
  const std::string rel = q.after ? "after" : "before";
  switch (q.kind) {
    case Template::exist:
      return {"is", "there", "a", to_string(q.size), to_string(q.color), to_string(q.shape)};
    case Template::count: return {"how", "many", plural(q.shape), "are", "there"};
    case Template::compare:
      return {"is", "the", to_string(q.color), "object", "the", "same",
              q.compare_shape ? "shape" : "size", "as", "the", to_string(q.other_color),
              "object"};
    case Template::query_shape: return {"what", "shape", "is", "the", to_string(q.color), "object"};
    case Template::query_size: return {"what", "size", "is", "the", to_string(q.color), "object"};
    case Template::order_action:
      t = {"what", "does", "the", to_string(q.color), "object", "do", rel, "it"};
      append(action_phrase(q.action, true));
      return t;
    case Template::order_color:
      t = {"what", "color", "is", "the", "object", "that"};
      append(action_phrase(q.other_action, true));
      append({rel, "the", to_string(q.color), "object"});
      append(action_phrase(q.action, true));
      return t;
    case Template::repeat_count:
      t = {"how", "many", "times", "does", "the", to_string(q.color), "object"};
      append(action_phrase(q.action, false));
      return t;
  }
  return t;
}

QuestionProgram parse_question(const std::vector<std::string>& tokens) {
  auto fail = [&]() -> QuestionProgram {
    std::string text;
    for (const auto& t : tokens) text += t + " ";
    throw FormatError("unrecognized question: " + text);
  };
  auto at = [&](std::size_t i) -> const std::string& {
    static const std::string empty;
    return i < tokens.size() ? tokens[i] : empty;
  };
  auto expect = [&](std::size_t i, const char* word) { return at(i) == word; };
  auto rel = [&](std::size_t i, bool& after) {
    if (at(i) == "after") after = true;
    else if (at(i) == "before") after = false;
    else fail();
  };
  QuestionProgram q;
  try {
    if (expect(0, "is") && expect(1, "there")) {
      if (tokens.size() != 6 || !expect(2, "a")) return fail();
      q.kind = Template::exist;
      q.size = parse_size(at(3));
      q.color = parse_color(at(4));
      q.shape = parse_shape(at(5));
      return q;
    }
    if (expect(0, "how") && expect(1, "many") && expect(2, "times")) {
      if (!expect(3, "does") || !expect(4, "the") || !expect(6, "object")) return fail();
      q.kind = Template::repeat_count;
      q.color = parse_color(at(5));
      std::size_t pos = 7;
      q.action = parse_action_phrase(tokens, pos, false);
      if (pos != tokens.size()) return fail();
      return q;
    }
    if (expect(0, "how") && expect(1, "many")) {
      if (tokens.size() != 5 || !expect(3, "are") || !expect(4, "there")) return fail();
      const std::string& word = at(2);
      if (word.size() < 2 || word.back() != 's') return fail();
      q.kind = Template::count;
      q.shape = parse_shape(word.substr(0, word.size() - 1));
      return q;
    }
    if (expect(0, "is") && expect(1, "the")) {
      if (tokens.size() != 11 || !expect(3, "object") || !expect(4, "the") || !expect(5, "same") ||
          !expect(7, "as") || !expect(8, "the") || !expect(10, "object")) {
        return fail();
      }
      q.kind = Template::compare;
      q.color = parse_color(at(2));
      if (at(6) == "shape") q.compare_shape = true;
      else if (at(6) == "size") q.compare_shape = false;
      else return fail();
      q.other_color = parse_color(at(9));
      return q;
    }
    if (expect(0, "what") && (expect(1, "shape") || expect(1, "size")) && expect(2, "is")) {
      if (tokens.size() != 6 || !expect(3, "the") || !expect(5, "object")) return fail();
      q.kind = expect(1, "shape") ? Template::query_shape : Template::query_size;
      q.color = parse_color(at(4));
      return q;
    }
    if (expect(0, "what") && expect(1, "does")) {
      if (!expect(2, "the") || !expect(4, "object") || !expect(5, "do") || !expect(7, "it")) {
        return fail();
      }
      q.kind = Template::order_action;
      q.color = parse_color(at(3));
      rel(6, q.after);
      std::size_t pos = 8;
      q.action = parse_action_phrase(tokens, pos, true);
      if (pos != tokens.size()) return fail();
      return q;
    }
    if (expect(0, "what") && expect(1, "color") && expect(2, "is")) {
      if (!expect(3, "the") || !expect(4, "object") || !expect(5, "that")) return fail();
      q.kind = Template::order_color;
      std::size_t pos = 6;
      q.other_action = parse_action_phrase(tokens, pos, true);
      rel(pos, q.after);
      if (!expect(pos + 1, "the") || !expect(pos + 3, "object")) return fail();
      q.color = parse_color(at(pos + 2));
      pos += 4;
      q.action = parse_action_phrase(tokens, pos, true);
      if (pos != tokens.size()) return fail();
      return q;
    }
  } catch (const FormatError&) {
    return fail();
  }
  return fail();
}

namespace {

// Events of `object` in time order.
std::vector<const SceneEvent*> events_of(const SceneProgram& scene, std::size_t object) {
  std::vector<const SceneEvent*> out;
  for (const auto& e : scene.events) {
    if (e.object == object) out.push_back(&e);
  }
  return out;
}

// The single event of (object, action), or null when absent or repeated.
const SceneEvent* unique_event(const SceneProgram& scene, std::size_t object, Action action) {
  const SceneEvent* found = nullptr;
  for (const auto& e : scene.events) {
    if (e.object != object || e.action != action) continue;
    if (found) return nullptr;
    found = &e;
  }
  return found;
}

std::optional<std::size_t> index_of_color(const SceneProgram& scene, Color c) {
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (scene.objects[i].color == c) return i;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> oracle_answer(const SceneProgram& scene, const QuestionProgram& q) {
  switch (q.kind) {
    case Template::exist: {
      bool found = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const auto& o) {
        return o.size == q.size && o.color == q.color && o.shape == q.shape;
      });
      return found ? "yes" : "no";
    }
    case Template::count: {
      auto n = std::count_if(scene.objects.begin(), scene.objects.end(),
                             [&](const auto& o) { return o.shape == q.shape; });
      return std::to_string(n);
    }
    case Template::compare: {
      auto a = index_of_color(scene, q.color);
      auto b = index_of_color(scene, q.other_color);
      if (!a || !b) return std::nullopt;
      const auto& oa = scene.objects[*a];
      const auto& ob = scene.objects[*b];
      bool same = q.compare_shape ? oa.shape == ob.shape : oa.size == ob.size;
      return same ? "yes" : "no";
    }
    case Template::query_shape:
    case Template::query_size: {
      auto a = index_of_color(scene, q.color);
      if (!a) return std::nullopt;
      const auto& o = scene.objects[*a];
      return q.kind == Template::query_shape ? to_string(o.shape) : to_string(o.size);
    }
    case Template::order_action: {
      auto a = index_of_color(scene, q.color);
      if (!a) return std::nullopt;
      const SceneEvent* anchor = unique_event(scene, *a, q.action);
      if (!anchor) return std::nullopt;
      auto evs = events_of(scene, *a);
      auto it = std::find(evs.begin(), evs.end(), anchor);
      if (q.after) {
        if (it + 1 == evs.end()) return std::nullopt;
        return to_string((*(it + 1))->action);
      }
      if (it == evs.begin()) return std::nullopt;
      return to_string((*(it - 1))->action);
    }
    case Template::order_color: {
      auto a = index_of_color(scene, q.color);
      if (!a) return std::nullopt;
      const SceneEvent* anchor = unique_event(scene, *a, q.action);
      if (!anchor) return std::nullopt;
      const SceneEvent* match = nullptr;
      for (const auto& e : scene.events) {
        if (e.action != q.other_action) continue;
        if (q.after && e.start >= anchor->end && !match) match = &e;
        if (!q.after && e.end <= anchor->start) match = &e;
      }
      if (!match) return std::nullopt;
      return to_string(scene.objects[match->object].color);
    }
    case Template::repeat_count: {
      auto a = index_of_color(scene, q.color);
      if (!a) return std::nullopt;
      std::size_t total = 0;
      for (const auto& e : scene.events) {
        if (e.object == *a && e.action == q.action) total += e.repeats;
      }
      return std::to_string(total);
    }
  }
  return std::nullopt;
}

std::size_t AnswerBalance::count(Template t, const std::string& answer) const {
  auto it = counts_.find({t, answer});
  return it == counts_.end() ? 0 : it->second;
}

void AnswerBalance::record(Template t, const std::string& answer) { ++counts_[{t, answer}]; }

namespace {

struct Candidate {
  QuestionProgram program;
  std::string answer;
  bool preferred = true;
};

std::vector<Candidate> enumerate_candidates(const SceneProgram& scene, Template kind) {
  std::vector<Candidate> out;
  auto domain = answer_domain(kind);
  auto push = [&](const QuestionProgram& q, bool preferred = true) {
    auto ans = oracle_answer(scene, q);
    if (!ans || std::find(domain.begin(), domain.end(), *ans) == domain.end()) return;
    out.push_back({q, *ans, preferred});
  };
  QuestionProgram q;
  q.kind = kind;
  switch (kind) {
    case Template::exist:
      for (auto s : kSizes) {
        for (auto c : kColors) {
          for (auto sh : kShapes) {
            q.size = s;
            q.color = c;
            q.shape = sh;
            push(q);
          }
        }
      }
      break;
    case Template::count:
      for (auto sh : kShapes) {
        q.shape = sh;
        push(q);
      }
      break;
    case Template::compare:
      for (const auto& a : scene.objects) {
        for (const auto& b : scene.objects) {
          if (a.id == b.id) continue;
          for (bool by_shape : {true, false}) {
            q.color = a.color;
            q.other_color = b.color;
            q.compare_shape = by_shape;
            push(q);
          }
        }
      }
      break;
    case Template::query_shape:
    case Template::query_size:
      for (const auto& o : scene.objects) {
        q.color = o.color;
        push(q);
      }
      break;
    case Template::order_action:
    case Template::repeat_count:
      for (const auto& o : scene.objects) {
        for (auto a : kActions) {
          if (!unique_event(scene, o.id, a)) continue;
          q.color = o.color;
          q.action = a;
          if (kind == Template::repeat_count) {
            push(q);
          } else {
            for (bool after : {true, false}) {
              q.after = after;
              push(q);
            }
          }
        }
      }
      break;
    case Template::order_color:
      for (const auto& o : scene.objects) {
        for (auto a : kActions) {
          const SceneEvent* anchor = unique_event(scene, o.id, a);
          if (!anchor) continue;
          for (auto a2 : kActions) {
            for (bool after : {true, false}) {
              q.color = o.color;
              q.action = a;
              q.other_action = a2;
              q.after = after;
              // Preferred: an event with the same action lies on the other side
              // of the anchor, so the answer depends on temporal order.
              bool distractor = std::any_of(scene.events.begin(), scene.events.end(),
                                            [&](const SceneEvent& e) {
                                              return e.action == a2 &&
                                                     (after ? e.end <= anchor->start
                                                            : e.start >= anchor->end);
                                            });
              push(q, distractor);
            }
          }
        }
      }
      break;
  }
  if (std::any_of(out.begin(), out.end(), [](const auto& c) { return c.preferred; })) {
    std::erase_if(out, [](const auto& c) { return !c.preferred; });
  }
  return out;
}

}  // namespace

std::optional<QAItem> generate_question(const SceneProgram& scene, std::size_t scene_id,
                                        Template kind, std::uint64_t seed,
                                        const AnswerBalance* balance) {
  auto candidates = enumerate_candidates(scene, kind);
  if (candidates.empty()) return std::nullopt;
  std::mt19937_64 rng(seed);

  std::vector<std::string> answers;
  for (const auto& c : candidates) {
    if (std::find(answers.begin(), answers.end(), c.answer) == answers.end()) {
      answers.push_back(c.answer);
    }
  }
  std::sort(answers.begin(), answers.end());
  if (balance) {
    std::size_t lowest = SIZE_MAX;
    for (const auto& a : answers) lowest = std::min(lowest, balance->count(kind, a));
    std::erase_if(answers, [&](const auto& a) { return balance->count(kind, a) != lowest; });
  }
  const std::string chosen = answers[uniform(rng, 0, answers.size() - 1)];
  std::vector<const Candidate*> pool;
  for (const auto& c : candidates) {
    if (c.answer == chosen) pool.push_back(&c);
  }
  const Candidate& pick = *pool[uniform(rng, 0, pool.size() - 1)];

  QAItem item;
  item.scene_id = scene_id;
  item.kind = kind;
  item.task = task_of(kind);
  item.tokens = question_tokens(pick.program);
  item.answer = pick.answer;
  return item;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  static constexpr std::array<Split, 3> all{Split::train, Split::val, Split::test};
  return parse_enum(s, all, "split");
}

std::vector<std::size_t> Corpus::split_items(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (scene_split.at(items[i].scene_id) == s) out.push_back(i);
  }
  return out;
}

double temporal_majority_accuracy(const std::vector<QAItem>& items) {
  std::map<Template, std::map<std::string, std::size_t>> freq;
  std::size_t total = 0;
  for (const auto& it : items) {
    if (!is_temporal(it.task)) continue;
    ++freq[it.kind][it.answer];
    ++total;
  }
  if (total == 0) return 0.0;
  std::size_t correct = 0;
  for (const auto& [kind, answers] : freq) {
    std::size_t best = 0;
    for (const auto& [a, n] : answers) best = std::max(best, n);
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void enforce_anti_bias(const std::vector<QAItem>& items) {
  const double majority = temporal_majority_accuracy(items);
  if (majority >= kAntiBiasThreshold) {
    throw ContractError("anti-bias gate failed: per-template majority accuracy on temporal items is " +
                        std::to_string(majority));
  }
}

Corpus build_corpus(const CorpusConfig& config) {
  if (config.questions_per_scene == 0) throw ContractError("questions_per_scene must be positive");
  Corpus corpus;
  corpus.seed = config.seed;
  const std::size_t n_scenes =
      (config.items + config.questions_per_scene - 1) / config.questions_per_scene;
  std::mt19937_64 rng(hash_string("corpus", config.seed));

  const std::vector<Template> statics{Template::exist, Template::count, Template::compare,
                                      Template::query_shape, Template::query_size};
  const std::vector<Template> temporals{Template::order_action, Template::order_color,
                                        Template::repeat_count};
  AnswerBalance balance;
  for (std::size_t s = 0; s < n_scenes && corpus.items.size() < config.items; ++s) {
    auto scene = generate_scene(hash_string("scene" + std::to_string(s), config.seed),
                                config.scene);
    corpus.volumes.push_back(render_features(scene));

    // Half static, half temporal questions per scene.
    std::vector<Template> plan;
    for (std::size_t q = 0; q < config.questions_per_scene; ++q) {
      if (q % 2 == 0) {
        plan.push_back(statics[(q / 2 + s) % statics.size()]);
      } else {
        plan.push_back(temporals[(q / 2 + s) % temporals.size()]);
      }
    }
    std::set<std::vector<std::string>> asked;
    for (Template kind : plan) {
      if (corpus.items.size() >= config.items) break;
      const auto& group = is_temporal(task_of(kind)) ? temporals : statics;
      std::vector<Template> order{kind};
      for (Template t : group) {
        if (t != kind) order.push_back(t);
      }
      for (Template t : is_temporal(task_of(kind)) ? statics : temporals) order.push_back(t);
      bool done = false;
      for (std::size_t attempt = 0; attempt < order.size() * 3 && !done; ++attempt) {
        Template t = order[attempt % order.size()];
        auto item = generate_question(scene, s, t, rng(), &balance);
        if (!item || asked.count(item->tokens)) continue;
        asked.insert(item->tokens);
        balance.record(item->kind, item->answer);
        corpus.items.push_back(std::move(*item));
        done = true;
      }
    }
    corpus.scenes.push_back(std::move(scene));
  }

  std::vector<std::size_t> perm(corpus.scenes.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  corpus.scene_split.assign(corpus.scenes.size(), Split::train);
  const std::size_t n = perm.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  for (std::size_t i = 0; i < n; ++i) {
    corpus.scene_split[perm[i]] =
        i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }

  enforce_anti_bias(corpus.items);
  return corpus;
}

std::string scene_to_json(const SceneProgram& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"id", o.id},
                       {"shape", to_string(o.shape)},
                       {"color", to_string(o.color)},
                       {"size", to_string(o.size)},
                       {"x", o.x},
                       {"y", o.y}});
  }
  json events = json::array();
  for (const auto& e : scene.events) {
    events.push_back({{"object", e.object},
                      {"action", to_string(e.action)},
                      {"start", e.start},
                      {"end", e.end},
                      {"repeats", e.repeats}});
  }
  json j = {{"seed", scene.seed},     {"width", scene.width},   {"height", scene.height},
            {"frames", scene.frames}, {"objects", objects},     {"events", events}};
  return j.dump();
}

SceneProgram scene_from_json(const std::string& line) {
  try {
    auto j = json::parse(line);
    SceneProgram s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.width = j.at("width").get<std::size_t>();
    s.height = j.at("height").get<std::size_t>();
    s.frames = j.at("frames").get<std::size_t>();
    for (const auto& o : j.at("objects")) {
      s.objects.push_back({o.at("id").get<std::size_t>(), parse_shape(o.at("shape")),
                           parse_color(o.at("color")), parse_size(o.at("size")),
                           o.at("x").get<std::size_t>(), o.at("y").get<std::size_t>()});
    }
    for (const auto& e : j.at("events")) {
      s.events.push_back({e.at("object").get<std::size_t>(), parse_action(e.at("action")),
                          e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>(),
                          e.at("repeats").get<std::size_t>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad scene record: ") + e.what());
  }
}

std::string item_to_json(const QAItem& item) {
  json j = {{"scene_id", item.scene_id},
            {"task", to_string(item.task)},
            {"template", to_string(item.kind)},
            {"question_tokens", item.tokens}};
  if (item.task == Task::repetition_count) {
    j["answer"] = std::stoi(item.answer);
  } else {
    j["answer"] = item.answer;
  }
  return j.dump();
}

QAItem item_from_json(const std::string& line) {
  try {
    auto j = json::parse(line);
    QAItem item;
    item.scene_id = j.at("scene_id").get<std::size_t>();
    item.task = parse_task(j.at("task"));
    item.tokens = j.at("question_tokens").get<std::vector<std::string>>();
    item.kind = j.contains("template") ? parse_template(j.at("template"))
                                       : parse_question(item.tokens).kind;
    const auto& a = j.at("answer");
    item.answer = a.is_number_integer() ? std::to_string(a.get<long long>()) : a.get<std::string>();
    return item;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad QA record: ") + e.what());
  }
}

namespace {

std::string scene_file(std::size_t i) {
  std::ostringstream name;
  name << "scene_" << std::setw(5) << std::setfill('0') << i << ".fvol";
  return name.str();
}

template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

void write_corpus(const std::string& dir, const Corpus& corpus, std::size_t reader_workers) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  json splits = {{"train", json::array()}, {"val", json::array()}, {"test", json::array()}};
  for (std::size_t i = 0; i < corpus.scene_split.size(); ++i) {
    splits[to_string(corpus.scene_split[i])].push_back(i);
  }
  json manifest = {{"generator_version", corpus.generator_version},
                   {"seed", corpus.seed},
                   {"scenes", corpus.scenes.size()},
                   {"items", corpus.items.size()},
                   {"splits", splits}};
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw FormatError("cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "scenes.jsonl");
    for (const auto& s : corpus.scenes) out << scene_to_json(s) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "qa.jsonl");
    for (const auto& it : corpus.items) out << item_to_json(it) << '\n';
  }
  parallel_for(corpus.volumes.size(), reader_workers, [&](std::size_t i) {
    write_fvol((fs::path(dir) / "scenes" / scene_file(i)).string(), corpus.volumes[i]);
  });
}

Corpus read_corpus(const std::string& dir, std::size_t reader_workers) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw FormatError("no manifest.json in corpus directory " + dir);
  Corpus corpus;
  std::size_t n_scenes = 0;
  try {
    json manifest = json::parse(mf);
    corpus.generator_version = manifest.at("generator_version").get<std::string>();
    corpus.seed = manifest.at("seed").get<std::uint64_t>();
    n_scenes = manifest.at("scenes").get<std::size_t>();
    corpus.scene_split.assign(n_scenes, Split::train);
    for (const auto& [name, ids] : manifest.at("splits").items()) {
      Split s = parse_split(name);
      for (const auto& id : ids) corpus.scene_split.at(id.get<std::size_t>()) = s;
    }
  } catch (const json::exception& e) {
    throw FormatError(dir + "/manifest.json: " + e.what());
  } catch (const std::out_of_range&) {
    throw FormatError(dir + "/manifest.json: split references an unknown scene");
  }
  if (corpus.generator_version != kGeneratorVersion) {
    throw FormatError("corpus generator version '" + corpus.generator_version +
                      "' does not match '" + kGeneratorVersion + "'");
  }
  std::string line;
  std::ifstream sf(fs::path(dir) / "scenes.jsonl");
  while (std::getline(sf, line)) {
    if (!line.empty()) corpus.scenes.push_back(scene_from_json(line));
  }
  std::ifstream qf(fs::path(dir) / "qa.jsonl");
  if (!qf) throw FormatError("no qa.jsonl in corpus directory " + dir);
  while (std::getline(qf, line)) {
    if (!line.empty()) corpus.items.push_back(item_from_json(line));
  }
  if (corpus.scenes.size() != n_scenes) {
    throw FormatError("scenes.jsonl holds " + std::to_string(corpus.scenes.size()) +
                      " scenes, manifest declares " + std::to_string(n_scenes));
  }
  for (const auto& it : corpus.items) {
    if (it.scene_id >= n_scenes) {
      throw FormatError("QA item references unknown scene " + std::to_string(it.scene_id));
    }
  }
  corpus.volumes.resize(n_scenes);
  parallel_for(n_scenes, reader_workers, [&](std::size_t i) {
    corpus.volumes[i] = read_fvol((fs::path(dir) / "scenes" / scene_file(i)).string());
  });
  return corpus;
}

}  // namespace dpvqa
