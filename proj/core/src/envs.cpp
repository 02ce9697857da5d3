#include "bnl/envs.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bnl::envs {

using nlohmann::json;

namespace {

constexpr std::size_t kBottom = kGridSize - 1;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw std::invalid_argument("corrupt RNG state");
}

void set_pixel(TensorF& frame, std::size_t row, std::size_t col, std::size_t channel) {
  frame[(row * kGridSize + col) * 2 + channel] = 1.0f;
}

std::size_t move(std::size_t col, Action action) {
  if (action == Action::kLeft) return col == 0 ? 0 : col - 1;
  if (action == Action::kRight) return std::min(col + 1, kBottom);
  return col;
}

void check_action(Action a) {
  if (static_cast<std::size_t>(a) >= kNumActions) throw std::invalid_argument("invalid action");
}

}  // namespace

// ---------------------------------------------------------------- Catch

TensorF CatchEnv::reset() {
  return reset_to(static_cast<std::size_t>(rng_() % kGridSize), 5);
}

TensorF CatchEnv::reset_to(std::size_t ball_col, std::size_t paddle_col) {
  if (ball_col >= kGridSize || paddle_col >= kGridSize) throw std::out_of_range("catch: column out of range");
  ball_row_ = 0;
  ball_col_ = ball_col;
  paddle_col_ = paddle_col;
  step_ = 0;
  active_ = true;
  return render();
}

StepResult CatchEnv::step(Action action) {
  if (!active_) throw std::logic_error("catch: step called on a finished episode (reset first)");
  check_action(action);
  paddle_col_ = move(paddle_col_, action);
  ++ball_row_;
  ++step_;
  StepResult r;
  r.episode_step = step_;
  if (ball_row_ == kBottom) {
    const std::size_t lo = paddle_col_ == 0 ? 0 : paddle_col_ - 1;
    const std::size_t hi = paddle_col_ + 1;
    r.reward = (ball_col_ >= lo && ball_col_ <= hi) ? 1.0f : -1.0f;
    r.terminal = true;
    active_ = false;
  }
  r.observation = render();
  return r;
}

TensorF CatchEnv::render() const {
  TensorF frame({kGridSize, kGridSize, 2});
  for (std::size_t c = paddle_col_ == 0 ? 0 : paddle_col_ - 1; c <= std::min(paddle_col_ + 1, kBottom); ++c) {
    set_pixel(frame, kBottom, c, 0);
  }
  set_pixel(frame, ball_row_, ball_col_, 1);
  return frame;
}

std::string CatchEnv::save_state() const {
  return json{{"env", "catch"},  {"ball_row", ball_row_}, {"ball_col", ball_col_}, {"paddle_col", paddle_col_},
              {"step", step_},   {"active", active_},     {"rng", rng_to_string(rng_)}}
      .dump();
}

void CatchEnv::load_state(const std::string& blob) {
  const json j = json::parse(blob);
  if (j.at("env") != "catch") throw std::invalid_argument("state blob is not a catch state");
  ball_row_ = j.at("ball_row");
  ball_col_ = j.at("ball_col");
  paddle_col_ = j.at("paddle_col");
  step_ = j.at("step");
  active_ = j.at("active");
  rng_from_string(rng_, j.at("rng"));
}

// ---------------------------------------------------------------- Dodge

void DodgeEnv::spawn() {
  std::size_t col;
  if (!script_.empty()) {
    col = script_[script_pos_ % script_.size()] % kGridSize;
    ++script_pos_;
  } else {
    col = static_cast<std::size_t>(rng_() % kGridSize);
  }
  obstacles_.emplace_back(0, col);
}

TensorF DodgeEnv::reset() {
  agent_col_ = 5;
  obstacles_.clear();
  script_pos_ = 0;
  step_ = 0;
  active_ = true;
  spawn();
  return render();
}

StepResult DodgeEnv::step(Action action) {
  if (!active_) throw std::logic_error("dodge: step called on a finished episode (reset first)");
  check_action(action);
  agent_col_ = move(agent_col_, action);
  ++step_;
  for (auto& o : obstacles_) ++o.first;
  std::erase_if(obstacles_, [](const auto& o) { return o.first > kBottom; });
  StepResult r;
  r.episode_step = step_;
  const bool hit = std::any_of(obstacles_.begin(), obstacles_.end(),
                               [&](const auto& o) { return o.first == kBottom && o.second == agent_col_; });
  if (hit) {
    r.reward = -1.0f;
    r.terminal = true;
    active_ = false;
  } else {
    r.reward = kSurviveReward;
    if (step_ >= kMaxSteps) {
      r.truncated = true;
      active_ = false;
    } else if (step_ % kSpawnPeriod == 0) {
      spawn();
    }
  }
  r.observation = render();
  return r;
}

TensorF DodgeEnv::render() const {
  TensorF frame({kGridSize, kGridSize, 2});
  set_pixel(frame, kBottom, agent_col_, 0);
  for (const auto& [row, col] : obstacles_) set_pixel(frame, row, col, 1);
  return frame;
}

std::string DodgeEnv::save_state() const {
  json obs = json::array();
  for (const auto& [row, col] : obstacles_) obs.push_back({row, col});
  return json{{"env", "dodge"},          {"agent_col", agent_col_}, {"obstacles", obs},
              {"script", script_},       {"script_pos", script_pos_}, {"step", step_},
              {"active", active_},       {"rng", rng_to_string(rng_)}}
      .dump();
}

void DodgeEnv::load_state(const std::string& blob) {
  const json j = json::parse(blob);
  if (j.at("env") != "dodge") throw std::invalid_argument("state blob is not a dodge state");
  agent_col_ = j.at("agent_col");
  obstacles_.clear();
  for (const auto& o : j.at("obstacles")) obstacles_.emplace_back(o.at(0), o.at(1));
  script_ = j.at("script").get<std::vector<std::size_t>>();
  script_pos_ = j.at("script_pos");
  step_ = j.at("step");
  active_ = j.at("active");
  rng_from_string(rng_, j.at("rng"));
}

// ---------------------------------------------------------------- FrameStack

FrameStack::FrameStack(std::unique_ptr<Environment> inner, std::size_t frames)
    : inner_(std::move(inner)), frames_(frames) {
  if (frames_ < 1) throw std::invalid_argument("frame stack needs at least one frame");
}

Shape FrameStack::observation_shape() const {
  Shape s = inner_->observation_shape();
  s[2] *= frames_;
  return s;
}

TensorF FrameStack::stacked() const {
  const Shape inner_shape = inner_->observation_shape();
  const std::size_t c = inner_shape[2];
  const std::size_t hw = inner_shape[0] * inner_shape[1];
  TensorF out(observation_shape());
  for (std::size_t f = 0; f < frames_; ++f) {
    const TensorF& frame = history_[f];
    for (std::size_t pos = 0; pos < hw; ++pos)
      for (std::size_t ch = 0; ch < c; ++ch) out[pos * c * frames_ + f * c + ch] = frame[pos * c + ch];
  }
  return out;
}

TensorF FrameStack::reset() {
  TensorF first = inner_->reset();
  history_.assign(frames_, first);
  return stacked();
}

StepResult FrameStack::step(Action action) {
  StepResult r = inner_->step(action);
  history_.pop_front();
  history_.push_back(r.observation);
  r.observation = stacked();
  return r;
}

std::string FrameStack::save_state() const {
  json frames = json::array();
  for (const auto& f : history_) frames.push_back(rle_encode(f));
  return json{{"env", "frame_stack"}, {"inner", inner_->save_state()}, {"history", frames}}.dump();
}

void FrameStack::load_state(const std::string& blob) {
  const json j = json::parse(blob);
  if (j.at("env") != "frame_stack") throw std::invalid_argument("state blob is not a frame-stack state");
  inner_->load_state(j.at("inner"));
  history_.clear();
  for (const auto& f : j.at("history")) history_.push_back(rle_decode(f, inner_->observation_shape()));
}

std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed, std::size_t frame_stack) {
  std::unique_ptr<Environment> env;
  if (name == "catch") {
    env = std::make_unique<CatchEnv>(seed);
  } else if (name == "dodge") {
    env = std::make_unique<DodgeEnv>(seed);
  } else {
    throw std::invalid_argument("unknown environment '" + name + "'");
  }
  if (frame_stack > 1) env = std::make_unique<FrameStack>(std::move(env), frame_stack);
  return env;
}

// ---------------------------------------------------------------- RLE

std::string rle_encode(const TensorF& frame) {
  if (frame.rank() != 3) throw ShapeError("rle_encode expects H×W×C");
  const std::size_t c = frame.dim(2);
  const std::size_t hw = frame.dim(0) * frame.dim(1);
  std::string out;
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (ch) out += ';';
    out += "c" + std::to_string(ch) + ":";
    std::size_t pos = 0;
    bool first = true;
    while (pos < hw) {
      const int bit = frame[pos * c + ch] != 0.0f ? 1 : 0;
      std::size_t run = 0;
      while (pos < hw && (frame[pos * c + ch] != 0.0f ? 1 : 0) == bit) {
        ++run;
        ++pos;
      }
      if (!first) out += ',';
      out += std::to_string(bit) + "x" + std::to_string(run);
      first = false;
    }
  }
  return out;
}

TensorF rle_decode(const std::string& text, const Shape& shape) {
  TensorF frame(shape);
  const std::size_t c = shape.at(2);
  const std::size_t hw = shape.at(0) * shape.at(1);
  std::istringstream channels(text);
  std::string chunk;
  std::size_t ch = 0;
  while (std::getline(channels, chunk, ';')) {
    if (ch >= c) throw std::invalid_argument("rle: too many channels");
    const auto colon = chunk.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("rle: missing channel tag");
    std::istringstream runs(chunk.substr(colon + 1));
    std::string run;
    std::size_t pos = 0;
    while (std::getline(runs, run, ',')) {
      const auto x = run.find('x');
      if (x == std::string::npos) throw std::invalid_argument("rle: malformed run");
      const int bit = std::stoi(run.substr(0, x));
      const std::size_t len = std::stoul(run.substr(x + 1));
      if (pos + len > hw) throw std::invalid_argument("rle: run overflows frame");
      for (std::size_t i = 0; i < len; ++i, ++pos) frame[pos * c + ch] = bit ? 1.0f : 0.0f;
    }
    if (pos != hw) throw std::invalid_argument("rle: channel does not cover the frame");
    ++ch;
  }
  if (ch != c) throw std::invalid_argument("rle: channel count mismatch");
  return frame;
}

void TrajectoryLog::record(int episode, int step, int action, float reward, const TensorF& frame) {
  out_ << episode << '\t' << step << '\t' << action << '\t' << reward << '\t' << rle_encode(frame) << '\n';
}

}  // namespace bnl::envs
