// Trains a 2-8-1 sigmoid network on XOR with a kstarts(p = 0.25, k = 4) mask
// and prints the loss every 500 steps plus the surviving connections.

#include <iostream>
#include <vector>

#include "pinit/pinit.hpp"

int main() {
  using namespace pinit;
  const Matrix x{{0, 0, 1, 1}, {0, 1, 0, 1}};
  const Matrix y{{0, 1, 1, 0}};

  Rng rng = make_rng(7);
  const std::vector<std::size_t> dims{2, 8, 1};
  MlpNetwork net = MlpNetwork::create(dims, rng);
  AdamState adam = AdamState::for_network(net, {.lr = 0.05});

  KStartsState population = make_kstarts(net.layers, 0.25, {.k = 4, .elimination_interval = 50}, rng);
  auto masks = kstarts_select(net.layers, population, 0);

  for (std::int64_t it = 1; it <= 3000; ++it) {
    const auto trace = forward(net, x);
    const auto grads = backward(net, trace, y);
    masked_step(net.layers, grads, adam, masks);
    masks = kstarts_select(net.layers, population, it);
    if (it % 500 == 0) {
      std::cout << "iteration " << it << "  nmse " << nmse(trace.output(), y)
                << "  candidates left " << population.population_size() << '\n';
    }
  }

  const Matrix out = predict(net, x);
  std::cout << "predictions:";
  for (double v : out.values()) std::cout << ' ' << v;
  std::cout << '\n';
  for (std::size_t l = 0; l < masks.size(); ++l) {
    std::cout << "layer " << l << " sparsity " << sparsity(masks[l]) << '\n';
    write_mask(std::cout, masks[l]);
  }
}
