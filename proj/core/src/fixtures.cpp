#include "modcausal/fixtures.hpp"

#include <functional>

namespace modcausal {
namespace fixtures {

namespace {

using Noise = DiscreteScm::Noise;

Noise uniform_noise(int card) {
  Noise n;
  n.card = card;
  n.probs.assign(card, 1.0 / card);
  double sum = 0;
  for (int i = 0; i + 1 < card; i++) sum += n.probs[i];
  n.probs[card - 1] = 1.0 - sum;
  return n;
}

Noise noise(std::vector<double> probs) {
  Noise n;
  n.card = (int)probs.size();
  n.probs = std::move(probs);
  return n;
}

// Fills a mechanism table by calling f over every (parents, e, confounders)
// assignment, in the canonical input order.
std::vector<int> table_for(
    const Admg& g, const std::vector<int>& cards, const std::vector<Noise>& exo,
    const std::vector<Noise>& conf, int var,
    const std::function<int(const std::vector<int>& pa, int e, const std::vector<int>& u)>& f) {
  std::vector<int> in_cards;
  for (int p : g.parents(var)) in_cards.push_back(cards[p]);
  int e_pos = (int)in_cards.size();
  in_cards.push_back(exo[var].card);
  std::vector<int> edge_ids;
  for (std::size_t e = 0; e < g.bidirected_edges().size(); e++) {
    auto [a, b] = g.bidirected_edges()[e];
    if (a == var || b == var) {
      edge_ids.push_back((int)e);
      in_cards.push_back(conf[e].card);
    }
  }
  std::size_t total = 1;
  for (int c : in_cards) total *= c;
  std::vector<int> table(total);
  AssignmentIterator it(in_cards);
  for (std::size_t flat = 0; !it.done(); it.next(), flat++) {
    std::vector<int> pa(it.values().begin(), it.values().begin() + e_pos);
    int e = it.values()[e_pos];
    std::vector<int> u(it.values().begin() + e_pos + 1, it.values().end());
    table[flat] = f(pa, e, u);
  }
  return table;
}

}  // namespace

DiscreteScm frontdoor() {
  Admg g({"D", "I", "A"}, {{"D", "I"}, {"I", "A"}}, {{"D", "A"}});
  std::vector<int> cards = {2, 8, 2};
  std::vector<Noise> exo = {uniform_noise(4), uniform_noise(16), uniform_noise(8)};
  std::vector<Noise> conf = {noise({0.4, 0.6})};
  // mediator histograms per treatment arm, summing to 16
  static const int kCounts[2][8] = {{4, 4, 2, 2, 1, 1, 1, 1}, {1, 1, 1, 1, 2, 2, 4, 4}};
  std::vector<std::vector<int>> tables(3);
  tables[0] = table_for(g, cards, exo, conf, 0, [](const std::vector<int>&, int e,
                                                   const std::vector<int>& u) {
    return u[0] == 0 ? (e == 0 ? 1 : 0) : (e < 3 ? 1 : 0);
  });
  tables[1] = table_for(g, cards, exo, conf, 1,
                        [](const std::vector<int>& pa, int e, const std::vector<int>&) {
                          int acc = 0;
                          for (int i = 0; i < 8; i++) {
                            acc += kCounts[pa[0]][i];
                            if (e < acc) return i;
                          }
                          return 7;
                        });
  tables[2] = table_for(g, cards, exo, conf, 2,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          int proj = pa[0] >= 4 ? 1 : 0;
                          int flip = u[0] == 0 ? (e == 0 ? 1 : 0) : (e < 4 ? 1 : 0);
                          return proj ^ flip;
                        });
  return DiscreteScm(g, cards, exo, conf, tables);
}

DiscreteScm two_block() {
  Admg g({"Z3", "Z1", "Z2", "X1", "X2"},
         {{"Z3", "Z1"}, {"Z1", "Z2"}, {"X1", "Z1"}, {"Z1", "X2"}},
         {{"Z3", "Z1"}, {"Z1", "Z2"}, {"X1", "X2"}});
  std::vector<int> cards = {2, 2, 2, 2, 2};
  std::vector<Noise> exo(5, uniform_noise(4));
  // edge order after canonicalization: sorted index pairs
  // nodes: Z3=0, Z1=1, Z2=2, X1=3, X2=4 -> edges (0,1), (1,2), (3,4)
  std::vector<Noise> conf = {noise({0.35, 0.65}), noise({0.4, 0.6}), noise({0.45, 0.55})};
  // AND/OR cores keep the backdoor dependences strong; plain XOR cores with a
  // uniform source would wash them out
  std::vector<std::vector<int>> tables(5);
  // Z3(confounder u{Z3,Z1})
  tables[0] = table_for(g, cards, exo, conf, 0,
                        [](const std::vector<int>&, int e, const std::vector<int>& u) {
                          return u[0] ^ (e == 0 ? 1 : 0);
                        });
  // Z1(parents Z3, X1; confounders u{Z3,Z1}, u{Z1,Z2})
  tables[1] = table_for(g, cards, exo, conf, 1,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          if (e < 2) return (pa[0] | pa[1]) ^ u[1];
                          if (e == 2) return u[0];
                          return 1 - (pa[0] & pa[1]);
                        });
  // Z2(parent Z1; confounder u{Z1,Z2})
  tables[2] = table_for(g, cards, exo, conf, 2,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          return (pa[0] | u[0]) ^ (e == 0 ? 1 : 0);
                        });
  // X1(confounder u{X1,X2})
  tables[3] = table_for(g, cards, exo, conf, 3,
                        [](const std::vector<int>&, int e, const std::vector<int>& u) {
                          return u[0] ^ (e == 0 ? 1 : 0);
                        });
  // X2(parent Z1; confounder u{X1,X2})
  tables[4] = table_for(g, cards, exo, conf, 4,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          return (pa[0] | u[0]) ^ (e == 0 ? 1 : 0);
                        });
  return DiscreteScm(g, cards, exo, conf, tables);
}

DiscreteScm diamond() {
  Admg g({"I1", "D", "I2", "C"}, {{"I1", "D"}, {"D", "I2"}, {"I2", "C"}},
         {{"I1", "C"}, {"D", "C"}});
  std::vector<int> cards = {4, 2, 4, 3};
  std::vector<Noise> exo = {uniform_noise(8), uniform_noise(4), uniform_noise(8),
                            uniform_noise(8)};
  std::vector<Noise> conf = {noise({0.5, 0.5}), noise({0.35, 0.65})};
  static const int kI1Map[2][8] = {{0, 0, 1, 1, 2, 3, 0, 1}, {2, 3, 3, 2, 1, 0, 3, 2}};
  static const int kI2Map[2][8] = {{0, 0, 0, 1, 1, 2, 2, 3}, {3, 3, 3, 2, 2, 1, 1, 0}};
  std::vector<std::vector<int>> tables(4);
  tables[0] = table_for(g, cards, exo, conf, 0,
                        [](const std::vector<int>&, int e, const std::vector<int>& u) {
                          return kI1Map[u[0]][e];
                        });
  tables[1] = table_for(g, cards, exo, conf, 1,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          return (pa[0] >= 2 ? 1 : 0) ^ u[0] ^ (e == 0 ? 1 : 0);
                        });
  tables[2] = table_for(g, cards, exo, conf, 2,
                        [](const std::vector<int>& pa, int e, const std::vector<int>&) {
                          return kI2Map[pa[0]][e];
                        });
  tables[3] = table_for(g, cards, exo, conf, 3,
                        [](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          int shift = e < 6 ? 0 : (e == 6 ? 1 : 2);
                          return (pa[0] + u[0] + u[1] + shift) % 3;
                        });
  return DiscreteScm(g, cards, exo, conf, tables);
}

DiscreteScm asia_full() {
  Admg g({"asia", "tub", "smoke", "lung", "bronc", "either", "xray", "dysp"},
         {{"asia", "tub"},
          {"smoke", "lung"},
          {"smoke", "bronc"},
          {"tub", "either"},
          {"lung", "either"},
          {"either", "xray"},
          {"either", "dysp"},
          {"bronc", "dysp"}},
         {});
  std::vector<int> cards(8, 2);
  std::vector<Noise> exo(8, uniform_noise(16));
  std::vector<Noise> conf;
  // thresholded CPTs: sixteenths of probability for outcome 1
  auto cpt = [&](int var, std::function<int(const std::vector<int>&)> sixteenths) {
    return table_for(g, cards, exo, conf, var,
                     [&](const std::vector<int>& pa, int e, const std::vector<int>&) {
                       return e < sixteenths(pa) ? 1 : 0;
                     });
  };
  std::vector<std::vector<int>> tables(8);
  tables[0] = cpt(0, [](const std::vector<int>&) { return 2; });                     // asia
  tables[1] = cpt(1, [](const std::vector<int>& pa) { return pa[0] ? 5 : 1; });      // tub|asia
  tables[2] = cpt(2, [](const std::vector<int>&) { return 8; });                     // smoke
  tables[3] = cpt(3, [](const std::vector<int>& pa) { return pa[0] ? 5 : 1; });      // lung|smoke
  tables[4] = cpt(4, [](const std::vector<int>& pa) { return pa[0] ? 10 : 4; });     // bronc|smoke
  tables[5] = cpt(5, [](const std::vector<int>& pa) {                                // either|tub,lung
    return (pa[0] || pa[1]) ? 15 : 1;
  });
  tables[6] = cpt(6, [](const std::vector<int>& pa) { return pa[0] ? 14 : 2; });     // xray|either
  tables[7] = cpt(7, [](const std::vector<int>& pa) {                                // dysp|bronc,either
    return pa[0] ? (pa[1] ? 14 : 9) : (pa[1] ? 10 : 2);
  });
  return DiscreteScm(g, cards, exo, conf, tables);
}

std::string asia_observed_graph_text() {
  return "node asia\nnode tub\nnode lung\nnode either\nnode xray\nnode dysp\n"
         "asia -> tub\n"
         "tub -> either\n"
         "lung -> either\n"
         "either -> xray\n"
         "either -> dysp\n"
         "latent hidden_smoke_bronc\n"
         "hidden_smoke_bronc -> lung\n"
         "hidden_smoke_bronc -> dysp\n";
}

VariableSet asia_observed_vars() {
  return VariableSet{"asia", "tub", "lung", "either", "xray", "dysp"};
}

DiscreteScm surrogate() {
  Admg g({"PKA", "Mek", "Erk", "Akt"},
         {{"PKA", "Mek"}, {"PKA", "Erk"}, {"Mek", "Erk"}, {"PKA", "Akt"}, {"Erk", "Akt"}},
         {{"PKA", "Mek"}});
  std::vector<int> cards(4, 3);
  std::vector<Noise> exo(4, uniform_noise(6));
  std::vector<Noise> conf = {noise({0.3, 0.45, 0.25})};
  auto shifted = [](int base, int e) {
    int shift = e < 4 ? 0 : (e == 4 ? 1 : 2);
    return (base + shift) % 3;
  };
  std::vector<std::vector<int>> tables(4);
  tables[0] = table_for(g, cards, exo, conf, 0,
                        [&](const std::vector<int>&, int e, const std::vector<int>& u) {
                          return shifted(u[0], e);
                        });
  tables[1] = table_for(g, cards, exo, conf, 1,
                        [&](const std::vector<int>& pa, int e, const std::vector<int>& u) {
                          return shifted((pa[0] + 2 * u[0]) % 3, e);
                        });
  tables[2] = table_for(g, cards, exo, conf, 2,
                        [&](const std::vector<int>& pa, int e, const std::vector<int>&) {
                          // parents in index order: PKA, Mek
                          int base = pa[0] < 2 ? pa[1] : (pa[1] + 1) % 3;
                          return shifted(base, e);
                        });
  tables[3] = table_for(g, cards, exo, conf, 3,
                        [&](const std::vector<int>& pa, int e, const std::vector<int>&) {
                          // parents: PKA, Erk
                          int base = (pa[1] + (pa[0] == 2 ? 1 : 0)) % 3;
                          return shifted(base, e);
                        });
  return DiscreteScm(g, cards, exo, conf, tables);
}

Admg long_chain_graph() {
  return Admg({"a", "b", "c", "f", "g", "h", "i", "j", "k", "l", "m"},
              {{"a", "b"},
               {"b", "c"},
               {"b", "f"},
               {"a", "f"},
               {"f", "i"},
               {"g", "h"},
               {"j", "g"},
               {"k", "i"},
               {"k", "j"},
               {"i", "j"},
               {"l", "h"},
               {"h", "m"}},
              {{"a", "c"}, {"f", "g"}, {"h", "i"}, {"l", "m"}});
}

std::pair<DiscreteScm, DiscreteScm> bow_pair() {
  Admg g({"X", "Y"}, {{"X", "Y"}}, {{"X", "Y"}});
  std::vector<int> cards = {2, 2};
  std::vector<Noise> exo = {uniform_noise(2), uniform_noise(2)};
  std::vector<Noise> conf = {noise({0.5, 0.5})};
  std::vector<std::vector<int>> t1(2), t2(2);
  // both: X = u
  t1[0] = t2[0] = table_for(g, cards, exo, conf, 0,
                            [](const std::vector<int>&, int, const std::vector<int>& u) {
                              return u[0];
                            });
  // model 1: Y = u (ignores X); model 2: Y = X (copies the parent)
  t1[1] = table_for(g, cards, exo, conf, 1,
                    [](const std::vector<int>&, int, const std::vector<int>& u) { return u[0]; });
  t2[1] = table_for(g, cards, exo, conf, 1,
                    [](const std::vector<int>& pa, int, const std::vector<int>&) { return pa[0]; });
  return {DiscreteScm(g, cards, exo, conf, t1), DiscreteScm(g, cards, exo, conf, t2)};
}

}  // namespace fixtures
}  // namespace modcausal
