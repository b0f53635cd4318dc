// SPDX-License-Identifier: Apache-2.0
#include "slu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "slu/rng.hpp"

namespace slu {
namespace {

struct Piece {
  bool slot = false;
  std::string text;  // word, or slot label
};

std::vector<Piece> tokenize_template(const std::string& text) {
  std::vector<Piece> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
      out.push_back({true, tok.substr(1, tok.size() - 2)});
    } else {
      out.push_back({false, tok});
    }
  }
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

const std::vector<std::string> kCities = {
    "boston",  "dallas",   "denver",    "reno",        "atlanta",       "chicago",
    "seattle", "phoenix",  "houston",   "miami",       "detroit",       "orlando",
    "memphis", "oakland",  "baltimore", "pittsburgh",  "philadelphia",  "las vegas",
    "new york", "san francisco", "salt lake city", "los angeles", "kansas city",
    "saint louis"};
const std::vector<std::string> kDays = {"monday", "tuesday",  "wednesday", "thursday",
                                        "friday", "saturday", "sunday"};
const std::vector<std::string> kAirlines = {"delta",     "united",    "american",
                                            "continental", "us air", "alaska airlines",
                                            "northwest", "southwest"};
const std::vector<std::string> kClasses = {"first class", "economy", "business class", "coach"};
const std::vector<std::string> kPeriods = {"morning", "afternoon", "evening", "night"};
const std::vector<std::string> kCosts = {"cheapest", "lowest", "least expensive", "highest"};

void add_air_travel(Grammar& g) {
  g.fillers["city"] = kCities;
  g.fillers["day"] = kDays;
  g.fillers["airline"] = kAirlines;
  g.fillers["class"] = kClasses;
  g.fillers["period"] = kPeriods;
  g.fillers["cost"] = kCosts;
  g.slot_class["fromloc.city_name"] = "city";
  g.slot_class["toloc.city_name"] = "city";
  g.slot_class["stoploc.city_name"] = "city";
  g.slot_class["depart_date.day_name"] = "day";
  g.slot_class["airline_name"] = "airline";
  g.slot_class["class_type"] = "class";
  g.slot_class["depart_time.period_of_day"] = "period";
  g.slot_class["cost_relative"] = "cost";
}

const std::vector<Template> kAirTemplates = {
    {"i want a flight from {fromloc.city_name} to {toloc.city_name}", 2.0},
    {"i want a flight to {toloc.city_name} from {fromloc.city_name} that makes a stop in "
     "{stoploc.city_name}",
     1.5},
    {"show me the {cost_relative} fares from {fromloc.city_name} to {toloc.city_name}", 1.0},
    {"list {airline_name} flights from {fromloc.city_name} to {toloc.city_name} on "
     "{depart_date.day_name}",
     1.0},
    {"i need a {class_type} ticket to {toloc.city_name} from {fromloc.city_name}", 1.0},
    {"what flights leave {fromloc.city_name} in the {depart_time.period_of_day} on "
     "{depart_date.day_name}",
     1.0},
    {"book the {cost_relative} flight on {airline_name} to {toloc.city_name} stopping in "
     "{stoploc.city_name}",
     1.0},
    {"flights to {toloc.city_name} on {depart_date.day_name} {depart_time.period_of_day}", 1.0},
    {"does {airline_name} fly from {fromloc.city_name} to {toloc.city_name} in {class_type}",
     1.0},
    {"i would like to fly {class_type} to {toloc.city_name} on {depart_date.day_name} "
     "{depart_time.period_of_day}",
     1.0},
};

}  // namespace

std::vector<std::string> Grammar::vocabulary() const {
  std::set<std::string> words;
  for (const auto& t : templates)
    for (const auto& p : tokenize_template(t.text))
      if (!p.slot) words.insert(p.text);
  for (const auto& [_, values] : fillers)
    for (const auto& v : values)
      for (auto& w : split_words(v)) words.insert(std::move(w));
  return {words.begin(), words.end()};
}

std::set<std::string> Grammar::labels() const {
  std::set<std::string> out;
  for (const auto& t : templates)
    for (const auto& p : tokenize_template(t.text))
      if (p.slot) out.insert(p.text);
  return out;
}

Grammar slu_grammar() {
  Grammar g;
  add_air_travel(g);
  g.templates = kAirTemplates;
  return g;
}

Grammar pretrain_grammar() {
  Grammar g;
  add_air_travel(g);
  for (const char* cls : {"city", "day", "airline", "class", "period", "cost"}) g.slot_class[cls] = cls;
  for (auto t : kAirTemplates) {
    t.weight *= 0.5;
    g.templates.push_back(std::move(t));
  }
  const std::vector<Template> generic = {
      {"my family lives in {city} and i visit them every {day}", 1.0},
      {"we drove from {city} to {city} last {day}", 1.0},
      {"i think the weather in {city} is nice in the {period}", 1.0},
      {"she works for {airline} in {city}", 1.0},
      {"the {cost} hotel in {city} was full on {day}", 1.0},
      {"we sat in {class} and i would like to do that again", 1.0},
      {"he said that {city} is a big city", 1.0},
      {"do you know anyone who lives in {city}", 1.0},
      {"my brother is going to fly {airline} to {city} on {day} {period}", 1.0},
      {"the show starts {day} {period} so we leave early", 1.0},
      {"they never make a stop in {city} before {day}", 1.0},
      {"list the things i need for the trip", 0.5},
      {"what time does the store open on {day}", 1.0},
      {"i need a ticket for the game in {city}", 1.0},
      {"the {cost} fares are on {airline} this {period}", 1.0},
  };
  g.templates.insert(g.templates.end(), generic.begin(), generic.end());
  return g;
}

void validate(const SynthConfig& cfg) {
  if (cfg.feature_dim < 2) throw std::invalid_argument("synth: feature_dim must be >= 2");
  if (cfg.n_utterances < 1) throw std::invalid_argument("synth: n_utterances must be >= 1");
  if (cfg.min_frames < 1 || cfg.max_frames < cfg.min_frames)
    throw std::invalid_argument("synth: need 1 <= min_frames <= max_frames");
  if (cfg.emission_noise_sigma < 0 || cfg.additive_noise_sigma < 0)
    throw std::invalid_argument("synth: noise sigmas must be >= 0");
  if (cfg.heldout_fraction < 0 || cfg.heldout_fraction >= 1)
    throw std::invalid_argument("synth: heldout_fraction must be in [0, 1)");
  if (cfg.grammar.templates.empty()) throw std::invalid_argument("synth: grammar has no templates");
  for (const auto& t : cfg.grammar.templates) {
    if (!(t.weight > 0)) throw std::invalid_argument("synth: template weight must be > 0: " + t.text);
    for (const auto& p : tokenize_template(t.text)) {
      if (!p.slot) continue;
      auto cls = cfg.grammar.slot_class.find(p.text);
      if (cls == cfg.grammar.slot_class.end() || !cfg.grammar.fillers.contains(cls->second) ||
          cfg.grammar.fillers.at(cls->second).empty()) {
        throw std::invalid_argument("synth: template references unknown slot '" + p.text +
                                    "': " + t.text);
      }
    }
  }
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::All: return "all";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  for (auto v : {Split::Train, Split::Test, Split::All})
    if (split_name(v) == s) return v;
  throw std::invalid_argument("unknown split '" + std::string(s) + "' (expected train|test|all)");
}

std::map<std::string, std::set<std::string>> heldout_values(const Grammar& g, double fraction,
                                                            std::uint64_t lexicon_seed) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& [cls, values] : g.fillers) {
    auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(values.size())));
    n = std::min(n, values.size() - 1);
    std::vector<std::string> shuffled = values;
    Rng rng(derive_seed(lexicon_seed, fnv1a(cls)));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    out[cls] = std::set<std::string>(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

Vec word_embedding(std::string_view word, std::size_t dim, std::uint64_t lexicon_seed) {
  Rng rng(derive_seed(lexicon_seed, fnv1a(word)));
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec e(dim);
  for (double& v : e) v = n01(rng);
  return e;
}

FeatureSequence add_noise(const FeatureSequence& features, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("add_noise: sigma must be >= 0");
  FeatureSequence out = features;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.flat()) v += noise(rng);
  return out;
}

AnnotatedUtterance generate_utterance(const SynthConfig& cfg, std::size_t index) {
  const Grammar& g = cfg.grammar;
  const std::uint64_t stream = derive_seed(cfg.seed ^ fnv1a(cfg.id_prefix), index);
  Rng rng(stream);

  std::vector<double> weights;
  for (const auto& t : g.templates) weights.push_back(t.weight);
  std::discrete_distribution<std::size_t> pick_template(weights.begin(), weights.end());
  const auto& tmpl = g.templates[pick_template(rng)];

  const auto held = cfg.split == Split::Train
                        ? heldout_values(g, cfg.heldout_fraction, cfg.lexicon_seed)
                        : std::map<std::string, std::set<std::string>>{};
  std::map<std::string, std::set<std::string>> used;  // distinct values per class

  AnnotatedUtterance utt;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%06zu", cfg.id_prefix.c_str(), index);
  utt.id = id;
  for (const auto& piece : tokenize_template(tmpl.text)) {
    if (!piece.slot) {
      utt.words.push_back(piece.text);
      utt.tags.emplace_back("O");
      continue;
    }
    const auto& cls = g.slot_class.at(piece.text);
    std::vector<const std::string*> pool;
    for (const auto& v : g.fillers.at(cls)) {
      if (held.contains(cls) && held.at(cls).contains(v)) continue;
      if (used[cls].contains(v)) continue;
      pool.push_back(&v);
    }
    if (pool.empty()) throw std::invalid_argument("synth: filler class exhausted: " + cls);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::string& value = *pool[pick(rng)];
    used[cls].insert(value);
    bool first = true;
    for (auto& w : split_words(value)) {
      utt.words.push_back(std::move(w));
      utt.tags.push_back((first ? "B-" : "I-") + piece.text);
      first = false;
    }
  }

  std::uniform_int_distribution<std::size_t> frames(cfg.min_frames, cfg.max_frames);
  std::normal_distribution<double> emission(0.0, 1.0);
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t i = 0; i < utt.words.size(); ++i) {
    counts.push_back(frames(rng));
    total += counts.back();
  }
  FeatureSequence feats(total, cfg.feature_dim);
  std::size_t row = 0;
  for (std::size_t i = 0; i < utt.words.size(); ++i) {
    const Vec base = word_embedding(utt.words[i], cfg.feature_dim, cfg.lexicon_seed);
    for (std::size_t k = 0; k < counts[i]; ++k, ++row) {
      auto r = feats.row(row);
      for (std::size_t c = 0; c < cfg.feature_dim; ++c)
        r[c] = base[c] + cfg.emission_noise_sigma * emission(rng);
    }
  }
  utt.features = add_noise(feats, cfg.additive_noise_sigma, derive_seed(stream, 0x6e6f697365ULL));
  return utt;
}

Corpus generate_corpus(const SynthConfig& cfg) {
  validate(cfg);
  Corpus corpus;
  for (std::size_t i = 0; i < cfg.n_utterances; ++i) corpus.add(generate_utterance(cfg, i));
  return corpus;
}

std::map<std::string, double> expected_label_rates(const Grammar& g) {
  double total = 0.0;
  for (const auto& t : g.templates) total += t.weight;
  std::map<std::string, double> rates;
  for (const auto& t : g.templates) {
    std::set<std::string> seen;
    for (const auto& p : tokenize_template(t.text))
      if (p.slot) seen.insert(p.text);
    for (const auto& l : seen) rates[l] += t.weight / total;
  }
  return rates;
}

}  // namespace slu
