#ifndef PINIT_PINIT_HPP
#define PINIT_PINIT_HPP

#include "pinit/config.hpp"
#include "pinit/experiment.hpp"
#include "pinit/gradcheck.hpp"
#include "pinit/mask.hpp"
#include "pinit/matrix.hpp"
#include "pinit/mnist.hpp"
#include "pinit/network.hpp"
#include "pinit/optimizer.hpp"
#include "pinit/rng.hpp"
#include "pinit/strategies.hpp"

#endif  // PINIT_PINIT_HPP
