#pragma once

// Deterministic keyword-rule backend. It is a test fixture that exercises the
// whole pipeline offline; its labels carry no scientific meaning.

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pstcode/backend.hpp"
#include "pstcode/codebook.hpp"
#include "pstcode/dynamics.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

class MockBackend : public Backend {
public:
  /// `noise` is the per-(utterance, run) probability of perturbing the
  /// strategy answer, which gives repeated runs a nonzero entropy.
  MockBackend(const Codebook& cb, double noise = 0.08) : cb_(cb), noise_(noise) {
    build_cues();
  }

  std::string complete(const ChatRequest& r) override {
    if (r.task == Task::Dynamics) return dynamics_response_json(label_dynamics(r.target_text));
    return cb_.label_json(label_strategy(r.target_text, r.seed, r.run_id));
  }

  /// Noise-free keyword decision.
  StrategyLabel base_label(const std::string& utterance) const {
    auto ps = rank(utterance, ps_cues_);
    auto fac = rank(utterance, fac_cues_);
    StrategyLabel l;
    if (ps[0].second >= kMinScore) l.ps = kPsStrategies[ps[0].first];
    if (fac[0].second >= kMinScore) l.fac = kFacStrategies[fac[0].first];
    return l;
  }

  StrategyLabel label_strategy(const std::string& utterance, std::uint64_t seed,
                               int run) const {
    auto ps = rank(utterance, ps_cues_);
    auto fac = rank(utterance, fac_cues_);
    StrategyLabel l = base_label(utterance);
    auto h = text::fnv1a64(utterance,
                           text::fnv1a64(std::to_string(seed) + ":" +
                                         std::to_string(run)));
    double u = unit(h);
    if (u >= noise_) return l;
    // Perturb one dimension: take the runner-up if it has any support,
    // otherwise drop the label.
    if (unit(h * 0x9E3779B97F4A7C15ull + 1) < 0.5) {
      l.ps = ps[1].second > 0 ? std::optional(kPsStrategies[ps[1].first])
                              : std::nullopt;
    } else {
      l.fac = fac[1].second > 0 ? std::optional(kFacStrategies[fac[1].first])
                                : std::nullopt;
    }
    return l;
  }

  static DynamicsLabel label_dynamics(const std::string& utterance) {
    DynamicsLabel d;
    const std::string low = " " + text::to_lower(utterance) + " ";
    auto has = [&](std::string_view cue) {
      return low.find(cue) != std::string::npos;
    };

    // Question type from the sentences that end in '?'.
    bool question = false;
    bool open = false;
    {
      std::string sentence;
      for (char c : low) {
        sentence.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
          if (c == '?') {
            question = true;
            auto words = text::content_tokens(sentence);
            static const std::set<std::string> openers{
                "how", "what", "why", "describe", "tell"};
            for (std::size_t i = 0; i < words.size() && i < 3; ++i)
              if (openers.count(words[i])) open = true;
          }
          sentence.clear();
        }
      }
    }
    if (has(" tell me about ")) {
      question = true;
      open = true;
    }
    d.question_type = !question ? QuestionType::NA
                      : open    ? QuestionType::OpenEnded
                                : QuestionType::ClosedEnded;

    static const std::array<std::string_view, 10> directive{
        " you should ", " you need to ", " let's ", " i want you to ",
        " make sure ", " you have to ", " write down ", " i'd like you to ",
        " try to ", " go ahead and "};
    static const std::array<std::string_view, 7> non_directive{
        " how do you feel ", " what do you think ", " it sounds like ",
        " what would you like ", " what matters to you ", " in your own words ",
        " how would you "};
    int dir = 0;
    int nondir = 0;
    for (auto c : directive) dir += has(c);
    for (auto c : non_directive) nondir += has(c);
    if (d.question_type == QuestionType::OpenEnded) ++nondir;
    if (d.question_type == QuestionType::ClosedEnded) ++dir;
    d.autonomy = dir > nondir   ? Autonomy::Directive
                 : nondir > dir ? Autonomy::NonDirective
                                : Autonomy::NA;

    static const std::array<std::string_view, 5> past{
        " when i was ", " i remember ", " my mother ", " i used to ",
        " my own "};
    static const std::array<std::string_view, 4> present{
        " i'm so glad ", " i feel ", " i'm really impressed ", " i am glad "};
    d.self_disclosure = SelfDisclosure::NA;
    for (auto c : past)
      if (has(c)) d.self_disclosure = SelfDisclosure::Nonimmediate;
    if (d.self_disclosure == SelfDisclosure::NA)
      for (auto c : present)
        if (has(c)) d.self_disclosure = SelfDisclosure::Immediate;

    struct Cue {
      std::string_view phrase, source, target;
    };
    static const std::array<Cue, 8> metaphors{{
        {"invested", "money", "time"},
        {"on track", "journey", "progress"},
        {"toolbox", "tools", "skills"},
        {"weight off", "burden", "stress"},
        {"recharge", "battery", "energy"},
        {"juggling", "juggling", "responsibilities"},
        {"step by step", "walking", "progress"},
        {"roadblock", "journey", "obstacles"},
    }};
    for (const auto& m : metaphors) {
      auto at = low.find(m.phrase);
      if (at == std::string::npos) continue;
      d.metaphor.present = true;
      d.metaphor.phrase = utterance.substr(at - 1, m.phrase.size());
      d.metaphor.source_domain = std::string(m.source);
      d.metaphor.target_domain = std::string(m.target);
      break;
    }
    return d;
  }

private:
  static constexpr int kMinScore = 2;

  struct CueSet {
    std::vector<std::string> phrases;  // weight 2
    std::set<std::string> tokens;      // weight 1
  };

  static double unit(std::uint64_t h) {
    // splitmix64 finalizer, then the top 53 bits as a fraction.
    h ^= h >> 30;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 27;
    h *= 0x94D049BB133111EBull;
    h ^= h >> 31;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  void build_cues() {
    static const std::set<std::string> stop{
        "that", "this", "with", "have", "your", "they", "there", "then",
        "just", "some", "about", "again", "really", "pretty", "thing",
        "things", "were", "what", "when", "will", "would", "could", "right",
        "from", "like", "well", "know", "think", "make", "today"};
    // Tokens that occur in examples of exactly one strategy.
    std::map<std::string, std::set<int>> owners;
    auto owner_id = [](const StrategyLabel& l) {
      if (l.ps) return static_cast<int>(*l.ps);
      if (l.fac) return 10 + static_cast<int>(*l.fac);
      return -1;
    };
    for (const auto& ex : cb_.examples()) {
      int id = owner_id(ex.label);
      if (id < 0 || (ex.label.ps && ex.label.fac)) continue;
      for (const auto& t : text::content_tokens(ex.text))
        if (t.size() >= 4 && !stop.count(t)) owners[t].insert(id);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& e = cb_.entry(kPsStrategies[i]);
      for (const auto& c : e.cues) ps_cues_[i].phrases.push_back(text::to_lower(c));
    }
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& e = cb_.entry(kFacStrategies[i]);
      for (const auto& c : e.cues) fac_cues_[i].phrases.push_back(text::to_lower(c));
    }
    for (const auto& [tok, ids] : owners) {
      if (ids.size() != 1) continue;
      int id = *ids.begin();
      if (id < 10)
        ps_cues_[static_cast<std::size_t>(id)].tokens.insert(tok);
      else
        fac_cues_[static_cast<std::size_t>(id - 10)].tokens.insert(tok);
    }
  }

  template <std::size_t N>
  static std::array<std::pair<std::size_t, int>, N> rank(
      const std::string& utterance, const std::array<CueSet, N>& cues) {
    auto tokens = text::content_tokens(utterance);
    std::set<std::string> tokset(tokens.begin(), tokens.end());
    std::string joined = " ";
    for (const auto& t : tokens) joined += t + " ";
    std::array<std::pair<std::size_t, int>, N> scores;
    for (std::size_t i = 0; i < N; ++i) {
      int s = 0;
      for (const auto& p : cues[i].phrases)
        if (joined.find(" " + p + " ") != std::string::npos) s += 2;
      for (const auto& t : cues[i].tokens) s += tokset.count(t) ? 1 : 0;
      scores[i] = {i, s};
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](auto a, auto b) { return a.second > b.second; });
    return scores;
  }

  const Codebook& cb_;
  double noise_;
  std::array<CueSet, 5> ps_cues_;
  std::array<CueSet, 4> fac_cues_;
};

}  // namespace pstcode
