#include "dprobe/lm/mock_backend.hpp"

#include <fstream>

#include "dprobe/errors.hpp"
#include "dprobe/taskgen/problem.hpp"
#include "json.hpp"

namespace dprobe::lm {

namespace {

std::vector<MockEmission> parse_entries(const nlohmann::json& list) {
  if (!list.is_array()) throw ConsistencyError("mock script entries must be a JSON array");
  std::vector<MockEmission> out;
  for (const auto& e : list) {
    const auto repeat = e.value("repeat", std::size_t{1});
    MockEmission em;
    if (e.contains("emit")) {
      em.literal = e.at("emit").get<std::string>();
    } else if (!e.value("oracle", false)) {
      throw ConsistencyError("mock entry needs \"emit\" or \"oracle\": " + e.dump());
    }
    if (e.contains("perturb")) em.perturb = e.at("perturb").get<std::vector<long>>();
    if (e.contains("truncate")) em.truncate = e.at("truncate").get<std::size_t>();
    out.insert(out.end(), repeat, em);
  }
  return out;
}

struct QuestionView {
  std::string question;  // "a*b"
  std::size_t answer_tokens = 0;
};

QuestionView locate_question(const std::string& text) {
  const auto eq = text.rfind('=');
  if (eq == std::string::npos) throw ConsistencyError("mock backend: context has no '='");
  const auto sep = text.rfind(". ", eq);
  const std::size_t begin = sep == std::string::npos ? 0 : sep + 2;
  return {text.substr(begin, eq - begin), text.size() - eq - 1};
}

taskgen::MultProblem parse_question(const std::string& q) {
  const auto star = q.find('*');
  if (star == std::string::npos) throw ConsistencyError("mock backend: cannot parse question \"" + q + "\"");
  try {
    return taskgen::make_problem(q.substr(0, star), q.substr(star + 1));
  } catch (const ParameterError& e) {
    throw ConsistencyError(std::string("mock backend: bad question \"") + q + "\": " + e.what());
  }
}

}  // namespace

MockScript MockScript::parse(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
    MockScript s;
    if (j.contains("passes")) s.passes = parse_entries(j.at("passes"));
    if (j.contains("cells")) {
      for (const auto& [key, entries] : j.at("cells").items()) {
        const auto x = key.find('x');
        if (x == std::string::npos) throw ConsistencyError("mock cell key must look like \"2x3\", got " + key);
        s.cells[{std::stoul(key.substr(0, x)), std::stoul(key.substr(x + 1))}] = parse_entries(entries);
      }
    }
    if (s.passes.empty() && s.cells.empty()) throw ConsistencyError("mock script has no passes");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConsistencyError(std::string("mock script is not valid: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConsistencyError(std::string("mock script is not valid: ") + e.what());
  }
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read mock script " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

MockBackend::MockBackend(MockScript script, Vocab vocab) : script_(std::move(script)), vocab_(std::move(vocab)) {
  auto check = [&](const std::vector<MockEmission>& list) {
    for (const auto& e : list) {
      if (e.literal) vocab_.encode(*e.literal);
    }
  };
  check(script_.passes);
  for (const auto& [cell, list] : script_.cells) check(list);
}

std::string MockBackend::emission(std::span<const TokenId> context, std::size_t pass_index) const {
  const auto view = locate_question(vocab_.decode(context));
  const std::vector<MockEmission>* list = &script_.passes;
  std::optional<taskgen::MultProblem> problem;
  if (!script_.cells.empty()) {
    problem = parse_question(view.question);
    if (auto it = script_.cells.find({problem->n_digits, problem->m_digits}); it != script_.cells.end()) {
      list = &it->second;
    }
  }
  if (pass_index >= list->size()) {
    throw ScriptExhaustedError("mock script has " + std::to_string(list->size()) + " passes, pass " +
                               std::to_string(pass_index) + " requested");
  }
  const auto& entry = (*list)[pass_index];
  if (entry.literal) return *entry.literal;
  if (!problem) problem = parse_question(view.question);
  std::string text = problem->answer_digits;
  for (long pos : entry.perturb) {
    const long idx = pos < 0 ? static_cast<long>(text.size()) + pos : pos;
    if (idx < 0 || idx >= static_cast<long>(text.size())) continue;
    text[static_cast<std::size_t>(idx)] = static_cast<char>('0' + (text[static_cast<std::size_t>(idx)] - '0' + 1) % 10);
  }
  if (entry.truncate && *entry.truncate < text.size()) text.resize(*entry.truncate);
  return text;
}

BackendOutput MockBackend::step(std::span<const TokenId> context, const PassContext& pass, std::size_t) const {
  const std::size_t index = pass.dropout_active ? pass.index : 0;
  const auto text = emission(context, index);
  const auto position = locate_question(vocab_.decode(context)).answer_tokens;
  const TokenId next = position < text.size() ? vocab_.encode(std::string_view(text).substr(position, 1))[0]
                                              : vocab_.end_id();
  BackendOutput out;
  out.probabilities.assign(vocab_.size(), 0.0);
  out.probabilities[static_cast<std::size_t>(next)] = 1.0;
  out.argmax_id = next;
  return out;
}

}  // namespace dprobe::lm
