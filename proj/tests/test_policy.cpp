#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "legato/policy.hpp"

using namespace legato;

namespace {

NetArch small_arch() {
    NetArch a;
    a.h = 6;
    a.action_dim = 2;
    a.obs_dim = 2;
    a.hidden = {16, 16};
    return a;
}

Dataset small_dataset(std::uint64_t seed, int n, int h) {
    Rng rng = make_rng(seed);
    return gen_bimodal_reach(rng, n, h);
}

std::filesystem::path temp_file(const char* stem) {
    return std::filesystem::temp_directory_path() / stem;
}

}  // namespace

TEST_CASE("time embedding has the documented layout") {
    double e[kTimeEmbedDim];
    time_embedding(0.0, e);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == 1.0);
    CHECK(e[2] == Catch::Approx(0.0).margin(1e-15));
    CHECK(e[3] == 1.0);
    time_embedding(0.5, e);
    CHECK(e[0] == 0.5);
    CHECK(e[2] == Catch::Approx(1.0));
    CHECK(e[4] == Catch::Approx(0.0).margin(1e-12));
    CHECK(e[5] == Catch::Approx(-1.0));
}

TEST_CASE("input layout interleaves the condition column with the chunk") {
    NetArch arch = small_arch();
    PolicyNet net(arch);
    const GuidanceSchedule g = build_schedule({.d = 2, .r = 2, .s = 2, .h = 6}, 5);
    Chunk y(6, 2);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = static_cast<double>(i);
    const std::vector<double> obs{7.0, -3.0};

    std::vector<double> input;
    net.assemble_input(y, obs, 0.25, g, input);
    REQUIRE(static_cast<int>(input.size()) == arch.input_dim());

    // Row i occupies [3i, 3i+3): two action entries then the weight.
    CHECK(input[0] == 0.0);
    CHECK(input[1] == 1.0);
    CHECK(input[2] == 1.0);  // omega[0]
    CHECK(input[3 * 2 + 2] == Catch::Approx(2.0 / 3.0));
    CHECK(input[3 * 5 + 2] == 0.0);
    CHECK(input[18] == 7.0);
    CHECK(input[19] == -3.0);
    CHECK(input[20] == 0.25);  // first time-embedding entry
}

TEST_CASE("disabling the condition row zeroes the column but keeps the shape") {
    NetArch arch = small_arch();
    arch.cond_row = false;
    PolicyNet net(arch);
    const GuidanceSchedule g = build_schedule({.d = 2, .r = 2, .s = 2, .h = 6}, 5);
    const Chunk y(6, 2, 1.0);
    std::vector<double> input;
    net.assemble_input(y, {std::vector<double>{0.0, 0.0}}, 0.5, g, input);
    REQUIRE(static_cast<int>(input.size()) == arch.input_dim());
    for (int i = 0; i < 6; ++i) CHECK(input[static_cast<std::size_t>(3 * i + 2)] == 0.0);
}

TEST_CASE("normalizer round-trips actions and floors tiny deviations") {
    const Dataset ds = small_dataset(3, 64, 6);
    const Normalizer norm = Normalizer::fit(ds);
    const Chunk a = ds.demos[5].actions;
    const Chunk back = norm.denormalize_actions(norm.normalize_actions(a));
    CHECK(max_abs_diff(back, a) < 1e-12);

    // A constant column must not divide by zero.
    Dataset flat = ds;
    for (auto& demo : flat.demos)
        for (std::size_t i = 0; i < demo.actions.rows(); ++i) demo.actions(i, 1) = 4.0;
    const Normalizer nflat = Normalizer::fit(flat);
    CHECK(nflat.act_std[1] == 1e-8);
    const Chunk z = nflat.normalize_actions(flat.demos[0].actions);
    CHECK(z.all_finite());
}

TEST_CASE("normalized dataset statistics are standard") {
    const Dataset ds = small_dataset(9, 256, 6);
    const Normalizer norm = Normalizer::fit(ds);
    double mean = 0.0, var = 0.0;
    double n = 0.0;
    for (const auto& demo : ds.demos) {
        const Chunk z = norm.normalize_actions(demo.actions);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            mean += z(i, 0);
            var += z(i, 0) * z(i, 0);
            n += 1.0;
        }
    }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(mean == Catch::Approx(0.0).margin(1e-10));
    CHECK(var == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("flat parameter vector round-trips") {
    PolicyNet net(small_arch());
    Rng rng = make_rng(17);
    net.init(rng);
    const std::vector<double> params = net.flat_params();
    REQUIRE(params.size() == net.param_count());

    PolicyNet other(small_arch());
    other.set_flat_params(params);
    CHECK(other.flat_params() == params);

    // param_at indexes the same flat layout.
    PolicyNet probe(small_arch());
    probe.set_flat_params(params);
    probe.param_at(3) += 1.0;
    const std::vector<double> bumped = probe.flat_params();
    CHECK(bumped[3] == params[3] + 1.0);
    for (std::size_t i = 0; i < params.size(); ++i)
        if (i != 3) CHECK(bumped[i] == params[i]);

    CHECK_THROWS_AS(net.set_flat_params(std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("analytic gradients match finite differences") {
    const Dataset ds = small_dataset(21, 16, 6);
    TrainConfig cfg;
    cfg.family = TrainFamily::legato;
    cfg.d_range = {0, 3};
    cfg.r_range = {0, 4};

    PolicyNet net(small_arch());
    Rng rng = make_rng(55);
    net.init(rng);

    double worst = 0.0;
    for (int input = 0; input < 5; ++input)
        worst = std::max(worst, grad_check(net, ds.demos[static_cast<std::size_t>(input)],
                                           rng, cfg, 40, 1e-5));
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient check also covers the other families") {
    const Dataset ds = small_dataset(22, 8, 6);
    PolicyNet net(small_arch());
    Rng rng = make_rng(56);
    net.init(rng);
    for (TrainFamily family :
         {TrainFamily::vanilla, TrainFamily::rtc_train}) {
        TrainConfig cfg;
        cfg.family = family;
        cfg.d_range = {0, 3};
        CHECK(grad_check(net, ds.demos[0], rng, cfg, 25, 1e-5) < 1e-4);
    }
}

TEST_CASE("vanilla training schedules are identically zero") {
    TrainConfig cfg;
    cfg.family = TrainFamily::vanilla;
    Rng rng = make_rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const GuidanceSchedule g = sample_train_schedule(rng, cfg, 12);
        for (double w : g.omega) CHECK(w == 0.0);
    }
}

TEST_CASE("hard-prefix training schedules are binary") {
    TrainConfig cfg;
    cfg.family = TrainFamily::rtc_train;
    cfg.d_range = {0, 8};
    Rng rng = make_rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const GuidanceSchedule g = sample_train_schedule(rng, cfg, 12);
        for (double w : g.omega) CHECK((w == 0.0 || w == 1.0));
    }
}

TEST_CASE("hard-prefix target keeps the plain velocity off the prefix") {
    Rng rng = make_rng(3);
    const Chunk a = draw_normal_chunk(rng, 6, 2);
    const Chunk eps = draw_normal_chunk(rng, 6, 2);
    const GuidanceSchedule g = build_schedule({.d = 2, .r = 0, .s = 4, .h = 6}, 5);
    const Chunk target = train_target(a, eps, g, 0.3, TrainFamily::rtc_train);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(target(0, j) == 0.0);  // pinned rows regress to zero velocity
        CHECK(target(3, j) == a(3, j) - eps(3, j));
    }
}

TEST_CASE("training reduces the loss on a small problem") {
    const Dataset ds = small_dataset(31, 256, 6);
    TrainConfig cfg;
    cfg.steps = 800;
    cfg.batch = 32;
    cfg.seed = 5;
    cfg.d_range = {0, 3};
    cfg.r_range = {0, 4};

    auto head_tail = [&](TrainFamily family) {
        cfg.family = family;
        PolicyNet net(small_arch());
        const TrainResult result = train(net, ds, cfg);
        REQUIRE(result.loss_curve.size() == 800);
        const double head = std::accumulate(result.loss_curve.begin(),
                                            result.loss_curve.begin() + 50, 0.0) / 50.0;
        const double tail = std::accumulate(result.loss_curve.end() - 50,
                                            result.loss_curve.end(), 0.0) / 50.0;
        return std::pair{head, tail};
    };

    // Plain flow matching converges fast at this scale.
    const auto [vh, vt] = head_tail(TrainFamily::vanilla);
    CHECK(vt < 0.5 * vh);

    // The reshaped target has a larger irreducible variance (ramp rows
    // scale the regressand by up to kappa - 1), so the drop is slower but
    // must still be clear.
    const auto [lh, lt] = head_tail(TrainFamily::legato);
    CHECK(lt < 0.85 * lh);
}

TEST_CASE("training is deterministic") {
    const Dataset ds = small_dataset(32, 64, 6);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch = 16;
    cfg.seed = 77;
    cfg.d_range = {0, 3};
    cfg.r_range = {0, 3};

    PolicyNet a(small_arch());
    PolicyNet b(small_arch());
    const TrainResult ra = train(a, ds, cfg);
    const TrainResult rb = train(b, ds, cfg);
    CHECK(ra.loss_curve == rb.loss_curve);
    CHECK(a.flat_params() == b.flat_params());
}

TEST_CASE("zero training steps leave the deterministic initialization") {
    const Dataset ds = small_dataset(33, 16, 6);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 4;

    PolicyNet net(small_arch());
    train(net, ds, cfg);

    PolicyNet fresh(small_arch());
    Rng rng = make_rng(cfg.seed, 0x7261696eull);
    fresh.init(rng);
    CHECK(net.flat_params() == fresh.flat_params());
}

TEST_CASE("checkpoints round-trip exactly") {
    const Dataset ds = small_dataset(41, 64, 6);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch = 8;
    cfg.seed = 11;
    cfg.family = TrainFamily::rtc_train;
    cfg.d_range = {0, 4};

    Checkpoint ckpt;
    ckpt.net = PolicyNet(small_arch());
    ckpt.config = cfg;
    train(ckpt.net, ds, cfg);

    const auto p1 = temp_file("legato_ckpt_a.json");
    const auto p2 = temp_file("legato_ckpt_b.json");
    save_checkpoint(ckpt, p1);
    const Checkpoint back = load_checkpoint(p1);

    CHECK(back.net.arch() == ckpt.net.arch());
    CHECK(back.net.flat_params() == ckpt.net.flat_params());
    CHECK(back.net.normalizer().act_mean == ckpt.net.normalizer().act_mean);
    CHECK(back.net.normalizer().act_std == ckpt.net.normalizer().act_std);
    CHECK(back.net.normalizer().obs_mean == ckpt.net.normalizer().obs_mean);
    CHECK(back.net.normalizer().obs_std == ckpt.net.normalizer().obs_std);
    CHECK(back.config.family == cfg.family);
    CHECK(back.config.steps == cfg.steps);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.config.d_range.hi == cfg.d_range.hi);

    // Byte-for-byte stable across a save/load/save cycle.
    save_checkpoint(back, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1{std::istreambuf_iterator<char>(f1), std::istreambuf_iterator<char>()};
    const std::string s2{std::istreambuf_iterator<char>(f2), std::istreambuf_iterator<char>()};
    CHECK(s1 == s2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint loader rejects mismatched architectures") {
    Checkpoint ckpt;
    ckpt.net = PolicyNet(small_arch());
    Rng rng = make_rng(5);
    ckpt.net.init(rng);
    const auto p = temp_file("legato_ckpt_c.json");
    save_checkpoint(ckpt, p);

    NetArch other = small_arch();
    other.h = 8;
    const Checkpoint back = load_checkpoint(p);
    CHECK_THROWS_AS(require_arch(back, other), std::runtime_error);
    CHECK_NOTHROW(require_arch(back, small_arch()));

    // Tampered parameter count is caught on load.
    {
        std::ifstream is(p);
        nlohmann::json j;
        is >> j;
        j["params"].push_back(0.0);
        std::ofstream os(p);
        os << j.dump();
    }
    CHECK_THROWS_AS(load_checkpoint(p), std::runtime_error);
    std::filesystem::remove(p);
}

TEST_CASE("forward output shape matches the architecture") {
    PolicyNet net(small_arch());
    Rng rng = make_rng(8);
    net.init(rng);
    const GuidanceSchedule g = zero_schedule(6, 5);
    const Chunk y(6, 2, 0.1);
    const Chunk v = net.forward(y, {std::vector<double>{0.0, 0.0}}, 0.5, g);
    CHECK(v.rows() == 6);
    CHECK(v.cols() == 2);
    CHECK(v.all_finite());

    CHECK_THROWS_AS(net.forward(Chunk(4, 2), {std::vector<double>{0.0, 0.0}}, 0.5, g),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.forward(y, {std::vector<double>{0.0}}, 0.5, g),
                    std::invalid_argument);
}
