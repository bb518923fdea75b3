// Deterministic English-like corpus with long-range structure: every
// paragraph introduces a protagonist, a companion and a place and keeps
// referring back to them; relative clauses separate subjects from the verbs
// that must agree with them; quotes and parentheses must be closed.
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsf/rng.hpp"

namespace {

using Words = std::vector<std::string>;

const Words kNames = {"alice", "bruno", "clara", "dmitri", "elena", "felix", "greta", "hugo", "irene", "jonas",
                      "karla", "lucas", "mira", "nadia", "oscar", "paula", "quentin", "rosa", "stefan", "tessa",
                      "ulrich", "vera", "walter", "xenia", "yusuf", "zora", "anton", "bianca", "conrad", "delia"};

const Words kNouns = {"lamp",   "garden", "letter", "river",  "window", "basket", "candle", "bridge", "ladder",
                      "mirror", "kettle", "engine", "pocket", "ribbon", "saddle", "tunnel", "wagon",  "anchor",
                      "barrel", "cabinet", "dragon", "feather", "harbor", "island", "jacket", "lantern", "market",
                      "needle", "orchard", "parcel", "rabbit", "statue", "teacup", "violin", "whistle", "blanket",
                      "compass", "doorway", "fountain", "helmet"};

const Words kPlaces = {"village", "castle", "forest", "library", "station", "meadow", "kitchen", "harbor",
                       "cellar",  "tower",  "valley", "chapel",  "factory", "bakery", "museum", "theater",
                       "orchard", "quarry", "lighthouse", "monastery"};

const Words kAdjs = {"quiet",  "golden", "broken", "ancient", "narrow", "bright", "heavy", "hollow", "crooked",
                     "gentle", "silver", "frozen", "painted", "curious", "wooden", "tired", "shiny",  "empty",
                     "strange", "patient", "dusty", "crimson", "little", "enormous"};

// base, past
const std::vector<std::pair<std::string, std::string>> kVerbs = {
    {"carry", "carried"}, {"find", "found"},       {"hide", "hid"},          {"open", "opened"},
    {"paint", "painted"}, {"repair", "repaired"},  {"follow", "followed"},   {"watch", "watched"},
    {"sell", "sold"},     {"borrow", "borrowed"},  {"lift", "lifted"},       {"clean", "cleaned"},
    {"draw", "drew"},     {"remember", "remembered"}, {"polish", "polished"}, {"measure", "measured"}};

const Words kTimes = {"in the morning", "at noon", "after supper", "before dawn", "at midnight", "on sunday",
                      "during the storm", "in the evening"};

const Words kNumbers = {"two", "three", "four", "five", "six", "seven", "eight", "nine"};

const Words kSay = {"said", "whispered", "shouted", "asked", "replied", "muttered"};

std::string plural(const std::string& n) {
  if (n.ends_with("s") || n.ends_with("sh") || n.ends_with("ch")) return n + "es";
  return n + "s";
}

std::string third_person(const std::string& v) {
  if (v.ends_with("ry")) return v.substr(0, v.size() - 1) + "ies";
  if (v.ends_with("sh") || v.ends_with("ch") || v.ends_with("s")) return v + "es";
  return v + "s";
}

class Story {
 public:
  explicit Story(dsf::Rng& rng) : rng_(rng) {
    hero_ = pick(kNames);
    do friend_ = pick(kNames);
    while (friend_ == hero_);
    place_ = pick(kPlaces);
    thing_ = pick(kNouns);
    thing_adj_ = pick(kAdjs);
  }

  std::string paragraph() {
    std::string p = opening();
    const std::size_t n = 3 + rng_.below(4);
    for (std::size_t i = 0; i < n; ++i) p += " " + sentence();
    p += " " + closing();
    return p;
  }

 private:
  const std::string& pick(const Words& w) { return w[rng_.below(w.size())]; }
  const std::pair<std::string, std::string>& verb() { return kVerbs[rng_.below(kVerbs.size())]; }
  std::string who() { return rng_.below(2) ? hero_ : friend_; }

  std::string opening() {
    return hero_ + " and " + friend_ + " lived near the " + place_ + ", where " + hero_ + " kept a " + thing_adj_ +
           " " + thing_ + ".";
  }

  std::string closing() {
    switch (rng_.below(3)) {
      case 0: return "in the end, " + hero_ + " left the " + thing_adj_ + " " + thing_ + " at the " + place_ + ".";
      case 1: return "and so the " + thing_ + " stayed with " + friend_ + " in the " + place_ + ".";
      default: return "nobody in the " + place_ + " forgot the " + thing_adj_ + " " + thing_ + " of " + hero_ + ".";
    }
  }

  // Subject and verb separated by a relative clause; number must agree.
  std::string agreement() {
    const bool many = rng_.below(2) == 1;
    const std::string noun = pick(kNouns);
    const auto& v = verb();
    std::string s = "the " + (many ? plural(noun) : noun) + " that " + who() + " " + v.second + " " +
                    pick(kTimes) + " ";
    s += many ? "are " : "is ";
    s += pick(kAdjs) + ".";
    return s;
  }

  std::string counting() {
    const std::string noun = pick(kNouns);
    if (rng_.below(3) == 0) return who() + " had one " + noun + " (only one " + noun + ").";
    const std::string& k = pick(kNumbers);
    return who() + " had " + k + " " + plural(noun) + " (" + k + " " + plural(noun) + " in all).";
  }

  std::string quote() {
    const auto& v = verb();
    const std::string speaker = who();
    const std::string listener = speaker == hero_ ? friend_ : hero_;
    return "\"" + listener + ", please " + v.first + " the " + thing_ + ",\" " + pick(kSay) + " " + speaker + ".";
  }

  std::string action() {
    const auto& v = verb();
    const std::string s = who();
    return s + " " + v.second + " the " + pick(kAdjs) + " " + pick(kNouns) + " " + pick(kTimes) + ".";
  }

  std::string habit() {
    const auto& v = verb();
    return "every day " + who() + " " + third_person(v.first) + " the " + thing_ + " in the " + place_ + ".";
  }

  std::string sentence() {
    switch (rng_.below(6)) {
      case 0: return agreement();
      case 1: return counting();
      case 2: return quote();
      case 3: return habit();
      case 4: return "later, " + who() + " went back to the " + place_ + " to look for the " + thing_ + ".";
      default: return action();
    }
  }

  dsf::Rng& rng_;
  std::string hero_, friend_, place_, thing_, thing_adj_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write a deterministic synthetic text corpus"};
  std::uint64_t seed = 1;
  std::size_t bytes = 1 << 20;
  std::string out_path;
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--bytes", bytes, "Approximate output size in bytes");
  app.add_option("--out", out_path, "Output file")->required();
  CLI11_PARSE(app, argc, argv);

  dsf::Rng rng(seed);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << out_path << '\n';
    return 2;
  }
  std::size_t written = 0;
  while (written < bytes) {
    Story story(rng);
    const std::string line = story.paragraph() + "\n";
    out << line;
    written += line.size();
  }
  return 0;
}
