#include <doctest.h>

#include <cmath>

#include "modcausal/dcm.hpp"
#include "modcausal/fixtures.hpp"
#include "modcausal/metrics.hpp"

using namespace modcausal;

namespace {

Admg frontdoor_graph() { return parse_admg("D -> I\nI -> A\nD <-> A\n"); }

Distribution empirical_marginal(const Dataset& d, const VariableSet& keep) {
  Dataset proj = d.project(keep);
  Distribution out(proj.variables, proj.cards);
  std::vector<int> row(proj.variables.size());
  for (std::size_t r = 0; r < proj.n_rows; r++) {
    for (std::size_t c = 0; c < proj.variables.size(); c++) row[c] = proj.at(r, c);
    out.at(row) += 1.0 / (double)proj.n_rows;
  }
  return out;
}

}  // namespace

TEST_SUITE("dcm") {

TEST_CASE("init wires noise exactly along the graph structure") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 1);
  // D: no parents, private noise card 2, one shared source of card 2*2
  CHECK(dcm.mechanism(0).row_cards == std::vector<int>{2, 4});
  // I: parent D, private noise card 8, no shared source
  CHECK(dcm.mechanism(1).row_cards == std::vector<int>{2, 8});
  // A: parent I, private noise card 2, the shared source with D
  CHECK(dcm.mechanism(2).row_cards == std::vector<int>{8, 2, 4});
  CHECK(dcm.confounder(0).card == 4);
  CHECK_THROWS_AS(dcm_init(g, {1, 8, 2}, {}, 1), validation_error);
}

TEST_CASE("same seed gives identical parameters") {
  Admg g = frontdoor_graph();
  Dcm a = dcm_init(g, {2, 8, 2}, {}, 9), b = dcm_init(g, {2, 8, 2}, {}, 9);
  for (int v = 0; v < 3; v++) CHECK(a.mechanism(v).logits == b.mechanism(v).logits);
  Dcm c = dcm_init(g, {2, 8, 2}, {}, 10);
  CHECK(a.mechanism(0).logits != c.mechanism(0).logits);
}

TEST_CASE("zero logits give a uniform exact table") {
  Admg g = frontdoor_graph();
  NoiseConfig cfg;
  cfg.init_scale = 0.0;
  Dcm dcm = dcm_init(g, {2, 8, 2}, cfg, 1);
  Distribution joint = dcm_exact_distribution(dcm, VariableSet{"D", "I", "A"});
  for (double v : joint.p) CHECK(v == doctest::Approx(1.0 / 32).epsilon(1e-12));
  joint.check_normalized(1e-9);
}

TEST_CASE("exact conditional slices sum to one") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 77);
  Distribution d = dcm_exact_distribution(dcm, VariableSet{"A"}, Assignment{{"I", 3}});
  d.check_normalized(1e-9);
  Distribution joint = dcm_exact_distribution(dcm, VariableSet(g.nodes()));
  joint.check_normalized(1e-9);
  CHECK_THROWS_AS(dcm_exact_distribution(dcm, VariableSet(g.nodes()), {}, {}, 8), numeric_error);
}

TEST_CASE("forward sampling matches the exact distribution") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 5);
  Dataset d = dcm_forward_sample(dcm, 20000, Assignment{{"D", 0}}, nullptr, 3);
  Distribution expect =
      dcm_exact_distribution(dcm, VariableSet{"A"}, {}, Assignment{{"D", 0}});
  Distribution got = empirical_marginal(d, VariableSet{"A"});
  CHECK(tvd(expect, got) < 0.02);
  // intervened columns are constant
  int col = d.column_of("D");
  for (std::size_t r = 0; r < d.n_rows; r++) CHECK(d.at(r, col) == 0);
}

TEST_CASE("intervening on everything pins every row") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 5);
  Dataset d = dcm_forward_sample(dcm, 64, Assignment{{"D", 1}, {"I", 6}, {"A", 0}}, nullptr, 8);
  for (std::size_t r = 0; r < d.n_rows; r++) {
    CHECK(d.at(r, 0) == 1);
    CHECK(d.at(r, 1) == 6);
    CHECK(d.at(r, 2) == 0);
  }
}

TEST_CASE("clamped columns are copied verbatim") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 5);
  DiscreteScm scm = fixtures::frontdoor();
  Dataset real = scm_sample(scm, 500, {}, 11).project(VariableSet{"I"});
  Dataset out = dcm_forward_sample(dcm, 500, {}, &real, 21);
  int src = real.column_of("I"), dst = out.column_of("I");
  for (std::size_t r = 0; r < out.n_rows; r++) CHECK(out.at(r, dst) == real.at(r, src));

  Dataset small = scm_sample(scm, 100, {}, 11).project(VariableSet{"I"});
  CHECK_THROWS_AS(dcm_forward_sample(dcm, 500, {}, &small, 21), validation_error);
}

TEST_CASE("set_trainable flips flags and validates names") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 5);
  CHECK(dcm.trainable(0));
  Dcm frozen = dcm_set_trainable(dcm, VariableSet{"D", "A"}, false);
  CHECK_FALSE(frozen.trainable(0));
  CHECK(frozen.trainable(1));
  CHECK_FALSE(frozen.edge_prior_trainable(0));  // an endpoint is frozen
  CHECK_THROWS_AS(dcm_set_trainable(dcm, VariableSet{"zzz"}, false), validation_error);
}

TEST_CASE("checkpoint round-trips bit-exactly and refuses the wrong graph") {
  Admg g = frontdoor_graph();
  Dcm dcm = dcm_init(g, {2, 8, 2}, {}, 5);
  std::string text = dcm.to_checkpoint();
  Dcm back = Dcm::from_checkpoint(text, &g);
  for (int v = 0; v < 3; v++) CHECK(back.mechanism(v).logits == dcm.mechanism(v).logits);
  CHECK(back.confounder(0).prior_logits == dcm.confounder(0).prior_logits);
  CHECK(back.to_checkpoint() == text);

  Admg other = parse_admg("D -> I\nI -> A\n");
  CHECK_THROWS_AS(Dcm::from_checkpoint(text, &other), validation_error);
  // corrupting the stored hash is refused
  std::string bad = text;
  bad.replace(bad.find("graph_hash ") + 11, 4, "dead");
  CHECK_THROWS_AS(Dcm::from_checkpoint(bad), validation_error);
}

TEST_CASE("two models with the same joint answer the frontdoor query alike") {
  // permuting a confounder's categories (prior and both endpoint mechanisms)
  // leaves every induced distribution intact; the identifiable query must
  // then agree between the two parameterizations
  Admg g = frontdoor_graph();
  Dcm a = dcm_init(g, {2, 8, 2}, {}, 123);
  Dcm b = a;
  int ucard = b.confounder(0).card;
  std::vector<int> perm(ucard);
  for (int i = 0; i < ucard; i++) perm[i] = (i + 1) % ucard;
  {
    auto& conf = b.confounder(0);
    auto old = conf.prior_logits;
    for (int i = 0; i < ucard; i++) conf.prior_logits[perm[i]] = old[i];
  }
  for (int v : {0, 2}) {  // D and A read the shared source as their last axis
    auto& mech = b.mechanism(v);
    auto old = mech.logits;
    std::size_t rows = mech.n_rows();
    for (std::size_t row = 0; row < rows; row++) {
      int u = (int)(row % ucard);
      std::size_t base = row - u;
      for (int c = 0; c < mech.out_card; c++)
        mech.logits[(base + perm[u]) * mech.out_card + c] = old[row * mech.out_card + c];
    }
  }
  Distribution ja = dcm_exact_distribution(a, VariableSet(g.nodes()));
  Distribution jb = dcm_exact_distribution(b, VariableSet(g.nodes()));
  REQUIRE(tvd(ja, jb) < 1e-9);
  for (int d = 0; d < 2; d++) {
    Distribution qa = dcm_exact_distribution(a, VariableSet{"A"}, {}, Assignment{{"D", d}});
    Distribution qb = dcm_exact_distribution(b, VariableSet{"A"}, {}, Assignment{{"D", d}});
    CHECK(tvd(qa, qb) < 1e-6);
  }
}

TEST_CASE("confounder sharing fed to both endpoints induces correlation") {
  Admg g = parse_admg("A <-> B\n");
  NoiseConfig cfg;
  cfg.init_scale = 0;
  Dcm dcm = dcm_init(g, {2, 2}, cfg, 1);
  // handcraft a correlated model: both mechanisms copy the shared source
  for (int v = 0; v < 2; v++) {
    auto& mech = dcm.mechanism(v);
    std::size_t rows = mech.n_rows();
    for (std::size_t row = 0; row < rows; row++) {
      int u = (int)(row % 4);
      mech.logits[row * 2 + 0] = (u % 2 == 0) ? 3.0 : -3.0;
      mech.logits[row * 2 + 1] = (u % 2 == 0) ? -3.0 : 3.0;
    }
  }
  Distribution joint = dcm_exact_distribution(dcm, VariableSet{"A", "B"});
  CHECK(joint.at({0, 0}) + joint.at({1, 1}) > 0.9);
}

}  // TEST_SUITE
