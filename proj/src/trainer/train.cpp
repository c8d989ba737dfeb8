#include "dprobe/trainer/train.hpp"

#include <algorithm>
#include <charconv>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "dprobe/errors.hpp"
#include "dprobe/trainer/optimizer.hpp"

namespace dprobe::trainer {

namespace {

// Each step allocates and frees the same few hundred activation buffers. Keeping
// them on the heap instead of returning them to the OS avoids a page-fault storm.
void retain_freed_buffers() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

double schedule(const TrainConfig& c, std::size_t step) {
  if (c.warmup_steps == 0 || step >= c.warmup_steps) return c.learning_rate;
  return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
}

struct Batch {
  lm::TokenBatch input;
  std::vector<int> targets;
};

Batch make_batch(const std::vector<EncodedLine>& lines, std::span<const std::size_t> picks, lm::TokenId pad) {
  std::size_t longest = 0;
  for (auto i : picks) longest = std::max(longest, lines[i].tokens.size());
  const std::size_t len = longest - 1;
  Batch b;
  b.input = {std::vector<lm::TokenId>(picks.size() * len, pad), picks.size(), len};
  b.targets.assign(picks.size() * len, numerics::kIgnoreTarget);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const auto& line = lines[picks[r]];
    for (std::size_t t = 0; t + 1 < line.tokens.size(); ++t) {
      b.input.ids[r * len + t] = line.tokens[t];
      if (line.target_in_loss[t]) b.targets[r * len + t] = line.tokens[t + 1];
    }
  }
  return b;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must lie in [0, 1)");
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << "step,loss,exact_match\n";
  std::size_t e = 0;
  for (const auto& [step, loss] : loss) {
    os << step << ',' << loss << ',';
    while (e < holdout_exact_match.size() && holdout_exact_match[e].first < step) ++e;
    if (e < holdout_exact_match.size() && holdout_exact_match[e].first == step) os << holdout_exact_match[e].second;
    os << '\n';
  }
  // Evaluations after the last logged loss (e.g. the final one).
  for (; e < holdout_exact_match.size(); ++e) {
    if (!loss.empty() && holdout_exact_match[e].first <= loss.back().first) continue;
    os << holdout_exact_match[e].first << ",," << holdout_exact_match[e].second << '\n';
  }
  return os.str();
}

EncodedLine encode_line(const taskgen::CorpusLine& line, const lm::Vocab& vocab, LossRegion region) {
  EncodedLine out;
  out.tokens = vocab.encode(line.text);
  out.tokens.push_back(vocab.end_id());
  out.target_in_loss.assign(out.tokens.size() - 1, false);
  const std::size_t answer = taskgen::answer_offset(line.text);
  for (std::size_t j = answer; j < out.tokens.size(); ++j) out.target_in_loss[j - 1] = true;
  if (region == LossRegion::kAllAnswers) {
    bool inside = false;
    for (std::size_t j = 0; j < answer; ++j) {
      if (inside) out.target_in_loss[j - 1] = true;
      if (line.text[j] == '=') inside = true;
      if (line.text[j] == '.') inside = false;
    }
  }
  return out;
}

TrainResult train(const TrainConfig& config, const taskgen::Corpus& corpus, lm::ModelConfig model_config,
                  const ProgressFn& progress) {
  config.validate();
  retain_freed_buffers();
  if (corpus.train.empty()) throw ParameterError("training corpus is empty");
  const auto vocab = lm::Vocab::standard();
  model_config.vocab_size = vocab.size();
  model_config.dropout_rate = config.dropout_rate;
  model_config.validate();

  std::vector<EncodedLine> lines;
  lines.reserve(corpus.train.size());
  for (const auto& l : corpus.train) {
    lines.push_back(encode_line(l, vocab, config.loss_region));
    if (lines.back().tokens.size() - 1 > model_config.context_length) {
      throw ParameterError("line \"" + l.text + "\" does not fit context length " +
                           std::to_string(model_config.context_length));
    }
  }
  std::vector<taskgen::CorpusLine> eval_lines = corpus.holdout;
  if (config.eval_limit && eval_lines.size() > config.eval_limit) eval_lines.resize(config.eval_limit);

  lm::Transformer model(model_config, numerics::derive_seed(config.seed, 1));
  auto& params = model.parameters();
  for (auto& p : params) p.zero_grad();
  Adam optimizer(params, Adam::Options{0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 sampler(numerics::derive_seed(config.seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, lines.size() - 1);
  const std::uint64_t dropout_seed = numerics::derive_seed(config.seed, 3);

  TrainReport report;
  std::vector<std::size_t> picks(config.batch_size);
  auto draw = [&] {
    for (auto& i : picks) i = pick(sampler);
    return make_batch(lines, picks, vocab.pad_id());
  };

  if (config.steps == 0) {
    auto batch = draw();
    numerics::Tape tape(false);
    auto stream = lm::DropoutStream::inactive();
    report.loss.emplace_back(0, numerics::cross_entropy(std::as_const(model).logits(tape, batch.input, stream),
                                                        batch.targets)
                                    .value()
                                    .item());
  }

  double last_finite = 0.0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    auto batch = draw();
    numerics::Tape tape(true);
    lm::DropoutStream stream(config.dropout_rate, config.dropout_rate > 0.0, dropout_seed, step);
    auto loss = numerics::cross_entropy(model.logits(tape, batch.input, stream), batch.targets);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingDivergence("training loss became non-finite at step " + std::to_string(step), step ? step - 1 : 0,
                               last_finite);
    }
    last_finite = value;
    tape.backward(loss);
    clip_grad_norm(params, config.grad_clip);
    optimizer.step(schedule(config, step));
    report.loss.emplace_back(step, value);
    report.steps_run = step + 1;

    std::optional<double> em;
    const bool last = step + 1 == config.steps;
    if (!eval_lines.empty() && ((config.eval_every && (step + 1) % config.eval_every == 0) || last)) {
      auto ckpt = std::make_shared<lm::ModelCheckpoint>(
          lm::ModelCheckpoint{model, vocab, {}, lm::kCheckpointFormatVersion});
      em = exact_match(lm::ModelBackend(ckpt), std::span<const taskgen::CorpusLine>(eval_lines), false, 0);
      report.holdout_exact_match.emplace_back(step + 1, *em);
    }
    if (progress) progress(step, value, em);
    if (em && *em >= config.stop_at_exact_match) break;
  }

  lm::TrainingProvenance provenance;
  provenance.seed = config.seed;
  provenance.steps = report.steps_run;
  {
    std::ostringstream corpus_desc;
    const auto& s = corpus.spec;
    corpus_desc << "n=" << s.n_range.min << ".." << s.n_range.max << " m=" << s.m_range.min << ".." << s.m_range.max
                << " per_cell=" << s.count_per_cell << " shots=" << s.shots_per_line << " seed=" << s.rng_seed
                << " train_lines=" << corpus.train.size();
    provenance.corpus = corpus_desc.str();
  }
  provenance.notes = std::string("loss_region=") +
                     (config.loss_region == LossRegion::kAllAnswers ? "all" : "final") +
                     " lr=" + std::to_string(config.learning_rate) + " batch=" + std::to_string(config.batch_size);
  return TrainResult{lm::ModelCheckpoint{std::move(model), vocab, provenance, lm::kCheckpointFormatVersion},
                     std::move(report)};
}

double exact_match(const lm::Backend& backend, std::span<const taskgen::PromptSpec> prompts, bool dropout_active,
                   std::uint64_t pass_seed, double dropout_rate) {
  if (prompts.empty()) throw ParameterError("exact_match needs at least one prompt");
  const auto& vocab = backend.vocab();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    taskgen::PromptSpec p = prompts[i];
    p.given_prefix.clear();
    const auto context = vocab.encode(taskgen::render_prompt(p));
    lm::PassContext pass{numerics::derive_seed(pass_seed, i), i, dropout_active, dropout_rate};
    const auto& answer = p.question.answer_digits;
    auto expected = vocab.encode(answer);
    expected.push_back(vocab.end_id());
    if (backend.greedy_generate(context, pass, answer.size() + 1) == expected) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(prompts.size());
}

double exact_match(const lm::Backend& backend, std::span<const taskgen::CorpusLine> lines, bool dropout_active,
                   std::uint64_t pass_seed, double dropout_rate) {
  std::vector<taskgen::PromptSpec> prompts;
  prompts.reserve(lines.size());
  for (const auto& l : lines) prompts.push_back(l.prompt);
  return exact_match(backend, std::span<const taskgen::PromptSpec>(prompts), dropout_active, pass_seed,
                     dropout_rate);
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ParameterError("config key " + key + " has invalid value \"" + value + "\"");
  }
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig rc;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError("config line " + std::to_string(number) + " lacks '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto& m = rc.model;
    auto& t = rc.train;
    if (key == "layers") m.layers = parse_number<std::size_t>(key, value);
    else if (key == "heads") m.heads = parse_number<std::size_t>(key, value);
    else if (key == "width" || key == "model_width") m.width = parse_number<std::size_t>(key, value);
    else if (key == "context_length") m.context_length = parse_number<std::size_t>(key, value);
    else if (key == "vocab_size") m.vocab_size = parse_number<std::size_t>(key, value);
    else if (key == "dropout_rate") t.dropout_rate = m.dropout_rate = parse_number<double>(key, value);
    else if (key == "steps") t.steps = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "learning_rate") t.learning_rate = parse_number<double>(key, value);
    else if (key == "warmup_steps") t.warmup_steps = parse_number<std::size_t>(key, value);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "eval_every") t.eval_every = parse_number<std::size_t>(key, value);
    else if (key == "eval_limit") t.eval_limit = parse_number<std::size_t>(key, value);
    else if (key == "grad_clip") t.grad_clip = parse_number<double>(key, value);
    else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, value);
    else if (key == "stop_at_exact_match") t.stop_at_exact_match = parse_number<double>(key, value);
    else if (key == "loss_region") {
      if (value == "final") t.loss_region = LossRegion::kFinalAnswer;
      else if (value == "all") t.loss_region = LossRegion::kAllAnswers;
      else throw ParameterError("loss_region must be final or all, got \"" + value + "\"");
    } else {
      throw ParameterError("unknown config key \"" + key + "\" on line " + std::to_string(number));
    }
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace dprobe::trainer
