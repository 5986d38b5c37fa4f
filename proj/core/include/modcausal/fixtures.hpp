#pragma once

#include <string>

#include "modcausal/scm.hpp"

namespace modcausal {
namespace fixtures {

/// Mediator system D -> I -> A with D <-> A: an 8-valued mediator stands in
/// for the high-dimensional variable, the attribute is a projection of the
/// mediator flipped by confounder-dependent noise, and the direct effect is
/// strong by construction.
DiscreteScm frontdoor();

/// The two-c-component system Z3 -> Z1 -> Z2, X1 -> Z1 -> X2 with the
/// bidirected chain Z3 <-> Z1 <-> Z2 and X1 <-> X2; all variables binary
/// with strong cross dependencies.
DiscreteScm two_block();

/// Diamond I1 -> D -> I2 -> C with I1 <-> C and D <-> C.
DiscreteScm diamond();

/// Full eight-variable lung-cancer network with synthetic CPTs on a 1/16
/// grid (all binary, Markovian).
DiscreteScm asia_full();
/// The observed part of the network once smoke and bronc are hidden, written
/// in the latent-declaration form consumed by split_non_markovian.
std::string asia_observed_graph_text();
/// Observed variables in node order.
VariableSet asia_observed_vars();

/// Four-variable protein-signalling surrogate with a hidden common cause of
/// the first two kinases (PKA <-> Mek).
DiscreteScm surrogate();

/// An 11-variable graph whose H-graph merges a three-c-component cycle into
/// one h-node and spans three topological levels; exercises interventional
/// H-graph alignment.
Admg long_chain_graph();

/// Two bow-graph models (X -> Y, X <-> Y) with identical observational joints
/// and different P(Y | do(X)); the classical unidentifiability witness.
std::pair<DiscreteScm, DiscreteScm> bow_pair();

}  // namespace fixtures
}  // namespace modcausal
