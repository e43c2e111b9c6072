// Minimal end-to-end walkthrough: synthesize a tiny dataset, train the desk
// model for a few epochs, evaluate, and print one generated caption.

#include <iostream>

#include "hocslm/trainer.hpp"

int main() {
    using namespace hocslm;

    auto data = make_synthetic_dataset(/*num_classes=*/4, /*samples_per_class=*/8, /*seed=*/0);
    std::cout << "dataset: " << data.size() << " samples, caption example: \"" << data.front().caption
              << "\"\n";

    ModelConfig mc;
    mc.backbone = BackboneConfig::desk(4);
    mc.backbone.window = 32;
    HocslmModel model(mc);

    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.strategy = SsfStrategy::T3;
    cfg.batch_size = 8;
    auto result = train(model, data, cfg);
    std::cout << "best epoch " << result.best_epoch << ", validation top1 " << result.report.top1 << "%\n";

    auto sample = prepare_sample(model, data.front(), model.config().stream);
    std::cout << "caption for sample 0: \"" << model.generate_caption(sample.coords, 48) << "\"\n";
    return 0;
}
