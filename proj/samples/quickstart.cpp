// Trains an AXEL head and a first-token dense head on two Gaussian clusters
// and prints held-out metrics.

#include <iomanip>
#include <iostream>

#include "hsd/synthetic.hpp"

int main() {
  using namespace hsd;
  const auto train_set = gaussian_clusters(200, 6, 16, 1.0, 1, "train");
  const auto val_set = gaussian_clusters(100, 6, 16, 1.0, 2, "val");
  const auto test_set = gaussian_clusters(200, 6, 16, 1.0, 3, "test");

  TrainConfig cfg = TrainConfig::from_preset('F');
  cfg.max_epochs = 100;
  cfg.patience = 20;
  cfg.seed = 7;

  std::cout << std::fixed << std::setprecision(4);
  for (Variant v : {Variant::dense_first_token, Variant::axel}) {
    BlockConfig block{.variant = v, .dim = 16, .reduction = 4};
    cfg.apply_to(block);
    auto head = Head<float>::build(block, 42);
    const auto result = train(head, train_set, val_set, cfg);
    const auto m = evaluate(head, test_set, cfg.max_len);
    std::cout << std::left << std::setw(18) << block.name() << " params " << head.param_count() << "  best epoch "
              << result.best_epoch << "  test F1 " << m.f1 << "  acc " << m.accuracy << '\n';
  }
}
