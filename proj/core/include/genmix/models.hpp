#pragma once

#include "genmix/network.hpp"
#include "genmix/rng.hpp"

namespace genmix {

// Fully-convolutional 28x28 -> 28x28 purifier, sigmoid head, 28,609
// trainable weights.
NetworkModel build_generator(Rng init_rng, std::string name = "generator");

// Canonical-vs-generated scorer, output (B,1) in (0,1).
NetworkModel build_discriminator(Rng init_rng, std::string name = "discriminator");

// LeNet5-style 10-class classifier, logits (B,10).
NetworkModel build_classifier(Rng init_rng, std::string name = "classifier");

// Capacity baseline: channel ladder 1-32-64-128-128-64-32-1, 333,697
// trainable weights.
NetworkModel build_large_generator(Rng init_rng, std::string name = "large_generator");

}  // namespace genmix
