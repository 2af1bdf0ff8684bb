#include <gtest/gtest.h>

#include <random>

#include "fedvisor/detect.hpp"
#include "test_util.hpp"

using namespace fedvisor;
using testutil::small_arch;

TEST(Iou, IdenticalBoxes) {
    Box b{0.5, 0.5, 0.3, 0.4};
    EXPECT_DOUBLE_EQ(iou(b, b), 1.0);
}

TEST(Iou, DisjointBoxes) {
    Box a{0.2, 0.2, 0.1, 0.1};
    Box b{0.8, 0.8, 0.1, 0.1};
    EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
}

TEST(Iou, HalfShiftedOverlap) {
    // intersection 0.25 x 0.5 = 0.125, union 0.25 + 0.25 - 0.125 = 0.375
    Box a{0.5, 0.5, 0.5, 0.5};
    Box b{0.75, 0.5, 0.5, 0.5};
    EXPECT_NEAR(iou(a, b), 1.0 / 3.0, 1e-12);
}

TEST(Iou, SymmetricAndSelfUnit) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        Box a{unit(rng), unit(rng), 0.01 + unit(rng), 0.01 + unit(rng)};
        Box b{unit(rng), unit(rng), 0.01 + unit(rng), 0.01 + unit(rng)};
        EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
        EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
        double v = iou(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Iou, ZeroAreaUnion) {
    Box a{0.5, 0.5, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(iou(a, a), 0.0);
}

TEST(Iou, NegativeExtentThrows) {
    Box a{0.5, 0.5, -0.1, 0.1};
    Box b{0.5, 0.5, 0.1, 0.1};
    EXPECT_THROW(iou(a, b), ShapeError);
}

TEST(EncodeConfidence, Cases) {
    EXPECT_DOUBLE_EQ(encode_confidence(1, 0.8), 0.8);
    EXPECT_DOUBLE_EQ(encode_confidence(0, 0.9), 0.0);
    Box a{0.5, 0.5, 0.5, 0.5};
    Box b{0.75, 0.5, 0.5, 0.5};
    EXPECT_NEAR(encode_confidence(1, iou(a, b)), 1.0 / 3.0, 1e-12);
}

TEST(InitModel, DeterministicPerSeed) {
    auto arch = small_arch();
    EXPECT_EQ(init_model(1, arch), init_model(1, arch));
    EXPECT_NE(init_model(1, arch), init_model(2, arch));
}

TEST(InitModel, BiasesZeroWeightsBounded) {
    auto arch = small_arch();
    auto m = init_model(7, arch);
    ASSERT_EQ(m.layers.size(), 2u);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(m.layers[l].w.cols));
        for (double v : m.layers[l].w.data) {
            EXPECT_LT(std::fabs(v), bound);
        }
        for (double b : m.layers[l].b) EXPECT_DOUBLE_EQ(b, 0.0);
    }
}

TEST(InitModel, EmptyHiddenRejected) {
    auto arch = small_arch();
    arch.hidden_sizes.clear();
    EXPECT_THROW(init_model(1, arch), ConfigError);
}

TEST(Forward, ZeroParamsGiveHalf) {
    auto arch = small_arch();
    ModelParams m = init_model(3, arch);
    for (auto& l : m.layers) {
        std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::mt19937 rng(5);
    auto img = testutil::random_image(rng, arch.input_side);
    auto pred = forward(m, img);
    ASSERT_EQ(pred.values.size(), arch.output_size());
    for (double v : pred.values) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Forward, PureAndDeterministic) {
    auto arch = small_arch();
    std::mt19937 rng(9);
    auto m = testutil::random_model(rng, arch);
    auto img = testutil::random_image(rng, arch.input_side);
    EXPECT_EQ(forward(m, img), forward(m, img));
}

TEST(Forward, OutputsInUnitInterval) {
    auto arch = small_arch();
    std::mt19937 rng(13);
    for (int k = 0; k < 100; ++k) {
        auto m = testutil::random_model(rng, arch);
        auto img = testutil::random_image(rng, arch.input_side);
        for (double v : forward(m, img).values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Forward, ShapeMismatchThrows) {
    auto arch = small_arch();
    auto m = init_model(1, arch);
    Matrix wrong(arch.input_side + 1, arch.input_side + 1);
    EXPECT_THROW(forward(m, wrong), ShapeError);
}

namespace {

// Prediction that zeroes every term appearing in the loss. Channels that do
// not appear (coordinates of non-responsible slots, classes of empty cells)
// are set to an arbitrary value on purpose.
GridPrediction matching_prediction(const GridTarget& t, const ArchConfig& arch) {
    GridPrediction p;
    p.grid_side = arch.grid_side;
    p.boxes_per_cell = arch.boxes_per_cell;
    p.num_classes = arch.num_classes;
    p.values.assign(arch.output_size(), 0.37);
    for (std::size_t i = 0; i < arch.num_cells(); ++i) {
        for (std::size_t j = 0; j < arch.boxes_per_cell; ++j) {
            std::size_t o = p.slot_offset(i, j);
            p.values[o + 4] = t.cells[i].confidence;
            if (t.is_responsible(i, j)) {
                p.values[o + 0] = t.cells[i].truth.x;
                p.values[o + 1] = t.cells[i].truth.y;
                p.values[o + 2] = t.cells[i].truth.w;
                p.values[o + 3] = t.cells[i].truth.h;
            }
        }
        if (t.cells[i].has_object) {
            for (std::size_t c = 0; c < arch.num_classes; ++c)
                p.values[p.class_offset(i, c)] = t.class_prob(i, c);
        }
    }
    return p;
}

}  // namespace

TEST(YoloLoss, ZeroWhenPredictionMatches) {
    auto arch = small_arch();
    std::mt19937 rng(21);
    for (int k = 0; k < 20; ++k) {
        auto t = testutil::random_target(rng, arch);
        auto p = matching_prediction(t, arch);
        auto loss = yolo_loss(p, t, arch);
        EXPECT_DOUBLE_EQ(loss.total, 0.0);
        EXPECT_DOUBLE_EQ(loss.class_term, 0.0);
        EXPECT_DOUBLE_EQ(loss.coord, 0.0);
        EXPECT_DOUBLE_EQ(loss.conf, 0.0);
    }
}

TEST(YoloLoss, NoObjectConfidenceHandComputed) {
    // single cell, no object, one slot predicting 0.5: 0.5 * (0 - 0.5)^2
    ArchConfig arch = small_arch();
    arch.grid_side = 1;
    arch.boxes_per_cell = 1;
    arch.lambda_noobj = 0.5;
    GridTarget t = make_empty_target(arch);
    GridPrediction p;
    p.grid_side = 1;
    p.boxes_per_cell = 1;
    p.num_classes = arch.num_classes;
    p.values.assign(arch.output_size(), 0.5);
    auto loss = yolo_loss(p, t, arch);
    EXPECT_DOUBLE_EQ(loss.conf, 0.125);
    EXPECT_DOUBLE_EQ(loss.class_term, 0.0);
    EXPECT_DOUBLE_EQ(loss.coord, 0.0);
    EXPECT_DOUBLE_EQ(loss.total, 0.125);
}

TEST(YoloLoss, LinearInLambdaCoord) {
    auto arch = small_arch();
    std::mt19937 rng(31);
    auto t = testutil::random_target(rng, arch);
    auto m = testutil::random_model(rng, arch);
    auto img = testutil::random_image(rng, arch.input_side);
    auto pred = forward(m, img);

    auto doubled = arch;
    doubled.lambda_coord *= 2.0;
    auto l1 = yolo_loss(pred, t, arch);
    auto l2 = yolo_loss(pred, t, doubled);
    EXPECT_NEAR(l2.coord, 2.0 * l1.coord, 1e-12);
    EXPECT_DOUBLE_EQ(l2.class_term, l1.class_term);
    EXPECT_DOUBLE_EQ(l2.conf, l1.conf);
}

TEST(YoloLoss, ComponentsNonNegative) {
    auto arch = small_arch();
    std::mt19937 rng(41);
    for (int k = 0; k < 100; ++k) {
        auto t = testutil::random_target(rng, arch);
        auto m = testutil::random_model(rng, arch);
        auto img = testutil::random_image(rng, arch.input_side);
        auto loss = yolo_loss(forward(m, img), t, arch);
        EXPECT_GE(loss.class_term, 0.0);
        EXPECT_GE(loss.coord, 0.0);
        EXPECT_GE(loss.conf, 0.0);
        EXPECT_GE(loss.total, 0.0);
    }
}

TEST(YoloLoss, NonzeroWhenScoredChannelPerturbed) {
    auto arch = small_arch();
    std::mt19937 rng(51);
    GridTarget t;
    // make sure at least one object cell exists
    do {
        t = testutil::random_target(rng, arch);
    } while (!t.cells[0].has_object);
    auto p = matching_prediction(t, arch);

    auto perturbed = p;
    perturbed.values[perturbed.slot_offset(0, 0) + 0] += 0.01;  // responsible x
    EXPECT_GT(yolo_loss(perturbed, t, arch).total, 0.0);

    perturbed = p;
    perturbed.values[perturbed.class_offset(0, 0)] += 0.01;  // object-cell class
    EXPECT_GT(yolo_loss(perturbed, t, arch).total, 0.0);

    perturbed = p;
    perturbed.values[perturbed.slot_offset(1, 0) + 4] += 0.01;  // any confidence
    EXPECT_GT(yolo_loss(perturbed, t, arch).total, 0.0);
}

TEST(YoloLoss, ShapeMismatchThrows) {
    auto arch = small_arch();
    std::mt19937 rng(61);
    auto t = testutil::random_target(rng, arch);
    GridPrediction p;
    p.grid_side = arch.grid_side;
    p.boxes_per_cell = arch.boxes_per_cell;
    p.num_classes = arch.num_classes;
    p.values.assign(arch.output_size() - 1, 0.5);
    EXPECT_THROW(yolo_loss(p, t, arch), ShapeError);
}

TEST(LossGradient, ZeroAtPerfectFit) {
    // Target built from the model's own prediction: no object cells, each
    // slot's confidence truth set to the predicted value. Every scored term
    // vanishes, so the gradient must be the zero vector.
    auto arch = small_arch();
    std::mt19937 rng(71);
    auto m = testutil::random_model(rng, arch);
    auto img = testutil::random_image(rng, arch.input_side);
    auto pred = forward(m, img);

    GridTarget t = make_empty_target(arch);
    for (std::size_t i = 0; i < arch.num_cells(); ++i)
        t.cells[i].confidence = pred.confidence(i, 0);

    std::vector<TrainSample> batch{{img, t}};
    EXPECT_DOUBLE_EQ(yolo_loss(pred, t, arch).total, 0.0);
    auto grads = loss_gradient(m, batch, arch);
    for (const auto& l : grads.layers) {
        for (double v : l.w.data) EXPECT_DOUBLE_EQ(v, 0.0);
        for (double v : l.b) EXPECT_DOUBLE_EQ(v, 0.0);
    }
}

TEST(LossGradient, MatchesFiniteDifferences) {
    auto arch = small_arch();  // S=2, B=1, C=2, 2-layer
    std::mt19937 rng(81);
    auto m = testutil::random_model(rng, arch);
    std::vector<TrainSample> batch;
    for (int i = 0; i < 3; ++i)
        batch.push_back({testutil::random_image(rng, arch.input_side),
                         testutil::random_target(rng, arch)});
    EXPECT_LT(testutil::max_grad_rel_error(m, batch), 1e-4);
}

TEST(LossGradient, BatchOfIdenticalSamplesEqualsSingle) {
    auto arch = small_arch();
    std::mt19937 rng(91);
    auto m = testutil::random_model(rng, arch);
    TrainSample s{testutil::random_image(rng, arch.input_side),
                  testutil::random_target(rng, arch)};
    std::vector<TrainSample> one{s};
    std::vector<TrainSample> many{s, s, s, s};
    auto g1 = loss_gradient(m, one, arch);
    auto gk = loss_gradient(m, many, arch);
    for (std::size_t l = 0; l < g1.layers.size(); ++l) {
        for (std::size_t i = 0; i < g1.layers[l].w.data.size(); ++i)
            EXPECT_NEAR(g1.layers[l].w.data[i], gk.layers[l].w.data[i], 1e-12);
        for (std::size_t i = 0; i < g1.layers[l].b.size(); ++i)
            EXPECT_NEAR(g1.layers[l].b[i], gk.layers[l].b[i], 1e-12);
    }
}

TEST(LossGradient, EmptyBatchThrows) {
    auto arch = small_arch();
    auto m = init_model(1, arch);
    std::vector<TrainSample> batch;
    EXPECT_THROW(loss_gradient(m, batch, arch), ShapeError);
}

TEST(SgdStep, ZeroLearningRateIsIdentity) {
    auto arch = small_arch();
    std::mt19937 rng(101);
    auto m = testutil::random_model(rng, arch);
    ModelGradients g;
    for (const auto& l : m.layers) {
        Layer gl;
        gl.w = l.w;
        gl.b = l.b;
        g.layers.push_back(gl);
    }
    EXPECT_EQ(sgd_step(m, g, 0.0), m);
}

TEST(SgdStep, UnitRateWithSelfGradsZeroes) {
    auto arch = small_arch();
    std::mt19937 rng(111);
    auto m = testutil::random_model(rng, arch);
    ModelGradients g;
    for (const auto& l : m.layers) g.layers.push_back(l);
    auto out = sgd_step(m, g, 1.0);
    for (const auto& l : out.layers) {
        for (double v : l.w.data) EXPECT_DOUBLE_EQ(v, 0.0);
        for (double v : l.b) EXPECT_DOUBLE_EQ(v, 0.0);
    }
}

TEST(SgdStep, TwoHalfStepsEqualOneFull) {
    auto arch = small_arch();
    std::mt19937 rng(121);
    auto m = testutil::random_model(rng, arch);
    ModelGradients g;
    for (const auto& l : init_model(rng(), arch).layers) g.layers.push_back(l);
    auto two = sgd_step(sgd_step(m, g, 0.05), g, 0.05);
    auto one = sgd_step(m, g, 0.1);
    for (std::size_t l = 0; l < one.layers.size(); ++l)
        for (std::size_t i = 0; i < one.layers[l].w.data.size(); ++i)
            EXPECT_NEAR(two.layers[l].w.data[i], one.layers[l].w.data[i], 1e-15);
}

TEST(SgdStep, ShapeMismatchThrows) {
    auto arch = small_arch();
    auto m = init_model(1, arch);
    ModelGradients g;
    g.layers.push_back(m.layers[0]);
    EXPECT_THROW(sgd_step(m, g, 0.1), ShapeError);
}
