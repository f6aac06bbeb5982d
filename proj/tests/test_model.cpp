#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "lorashift/model_io.hpp"
#include "lorashift/numfmt.hpp"

using namespace lorashift;
using namespace lorashift::testing;

namespace {

std::vector<double> read_golden(const std::string& name) {
    std::ifstream in(std::string(LORASHIFT_GOLDEN_DIR) + "/" + name);
    REQUIRE(in.good());
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') out.push_back(parse_hexfloat(line));
    }
    return out;
}

Matrix rms_normalize(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) /= std::sqrt(x.row(i).squaredNorm() / double(x.cols()));
    return out;
}

}  // namespace

TEST_CASE("build_model is deterministic") {
    const TransformerModel a = build_model(reference_config());
    const TransformerModel b = build_model(reference_config());
    CHECK(a == b);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(serialize_model(a) == serialize_model(b));

    ModelConfig other = reference_config();
    other.seed = 8;
    CHECK_FALSE(build_model(other) == a);
}

TEST_CASE("build_model rejects invalid counts") {
    ModelConfig c = reference_config();
    c.n_layers = 0;
    try {
        (void)build_model(c);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "n_layers");
    }
    c = reference_config();
    c.d_model = -1;
    CHECK_THROWS_AS((void)build_model(c), ConfigError);
    c = reference_config();
    c.init_scale = 0.0;
    CHECK_THROWS_AS((void)build_model(c), ConfigError);
}

TEST_CASE("golden logits for the reference model") {
    const std::vector<TokenId> single{3};
    const ActivationTrace t1 = forward(reference_model(), single);
    const auto golden1 = read_golden("reference_logits_tok3.txt");
    REQUIRE(golden1.size() == 50);
    CHECK(all_finite(t1.logits));
    for (int y = 0; y < 50; ++y) CHECK(std::fabs(t1.logits(y) - golden1[static_cast<std::size_t>(y)]) <= 1e-12);

    const ActivationTrace t3 = forward(reference_model(), kReferenceTokens);
    const auto golden3 = read_golden("reference_trace_tok3_1_4.txt");
    REQUIRE(golden3.size() == 32 + 50);
    for (int k = 0; k < 32; ++k) CHECK(std::fabs(t3.h_final(k) - golden3[static_cast<std::size_t>(k)]) <= 1e-12);
    for (int y = 0; y < 50; ++y) {
        CHECK(std::fabs(t3.logits(y) - golden3[static_cast<std::size_t>(32 + y)]) <= 1e-12);
    }
}

TEST_CASE("forward records every site at every position") {
    const auto& m = reference_model();
    const ActivationTrace t = forward(m, kReferenceTokens);
    CHECK(t.site_inputs.size() == 8);
    CHECK(t.residuals.size() == 4);
    for (const SiteId& s : m.sites()) {
        CHECK(t.input_at(s).rows() == 3);
        CHECK(t.input_at(s).cols() == m.site_input_dim(s));
        CHECK(t.output_at(s).rows() == 3);
        CHECK(t.output_at(s).cols() == 32);
    }
    for (TokenId y = 0; y < 50; ++y) CHECK(std::fabs(t.logits(y) - logit(m, t.h_final, y)) <= 1e-12);
}

TEST_CASE("single position: attention reduces to W_O W_V applied to the normed stream") {
    const auto& m = reference_model();
    const std::vector<TokenId> tok{9};
    const ActivationTrace t = forward(m, tok);
    const Matrix x0 = m.embedding().row(9);
    const Matrix value = rms_normalize(x0) * m.layers()[0].w_v.transpose();
    const Matrix attn = value * m.layers()[0].w_o.transpose();
    const SiteId site{0, Slot::attn_out};
    CHECK((t.input_at(site) - value).norm() <= 1e-13 * value.norm());
    CHECK((t.output_at(site) - attn).norm() <= 1e-13 * attn.norm());
}

TEST_CASE("forward validates tokens") {
    const auto& m = reference_model();
    const std::vector<TokenId> bad{3, 50};
    CHECK_THROWS_AS(forward(m, bad), InputError);
    const std::vector<TokenId> negative{-1};
    CHECK_THROWS_AS(forward(m, negative), InputError);
    CHECK_THROWS_AS(forward(m, std::vector<TokenId>{}), InputError);
    CHECK_THROWS_AS(forward(m, std::vector<TokenId>(17, 1)), InputError);
}

TEST_CASE("rmsnorm of a zero stream raises instead of returning a value") {
    const auto& ref = reference_model();
    Matrix emb = ref.embedding();
    emb.row(0).setZero();
    const TransformerModel m(ref.config(), emb, ref.layers(), ref.final_gain(), ref.unembedding());
    CHECK_THROWS_AS(forward(m, std::vector<TokenId>{0}), DegenerateInputError);
}

TEST_CASE("propagate_from_site: substituting base outputs reproduces h_L exactly") {
    const auto& m = reference_model();
    const ActivationTrace t = forward(m, kReferenceTokens);
    for (const SiteId& s : m.sites()) {
        CAPTURE(to_string(s));
        CHECK(propagate_from_site(m, s, t.output_at(s), kReferenceTokens) == t.h_final);
        const Matrix zero = Matrix::Zero(3, 32);
        CHECK(propagate_from_site(m, s, t.output_at(s) + zero, kReferenceTokens) == t.h_final);
    }
    CHECK_THROWS_AS(propagate_from_site(m, {0, Slot::attn_out}, Matrix::Zero(2, 32), kReferenceTokens),
                    DimensionError);
    CHECK_THROWS_AS(propagate_from_site(m, {4, Slot::attn_out}, t.output_at({0, Slot::attn_out}), kReferenceTokens),
                    SiteError);
}

TEST_CASE("propagate_from_site with base + dW z matches the perturbed model") {
    const auto& m = reference_model();
    const ActivationTrace t = forward(m, kReferenceTokens);
    for (const SiteId& s : m.sites()) {
        CAPTURE(to_string(s));
        const LoraAdapter a = seeded_adapter(m, s, 100 + static_cast<std::uint64_t>(s.layer * 2 + int(s.slot)));
        const LoraSet set({a}, 0.05);
        const Matrix dw = set.effective_delta(s);
        const Matrix substituted = t.output_at(s) + t.input_at(s) * dw.transpose();
        const Vector via_site = propagate_from_site(m, s, substituted, kReferenceTokens);
        const Vector perturbed = forward(apply(m, set), kReferenceTokens).h_final;
        CHECK((via_site - perturbed).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("jvp_from_site: linearity and agreement with central differences") {
    const auto& m = reference_model();
    const ActivationTrace t = forward(m, kReferenceTokens);
    SeededRng rng(77);
    for (const SiteId& s : m.sites()) {
        CAPTURE(to_string(s));
        const Matrix v = random_matrix(rng, 3, 32, 1.0);
        const Matrix w = random_matrix(rng, 3, 32, 1.0);

        CHECK(jvp_from_site(m, t, s, Matrix::Zero(3, 32)).isZero(0.0));

        const Vector jv = jvp_from_site(m, t, s, v);
        const Vector j2v = jvp_from_site(m, t, s, 2.0 * v);
        CHECK((j2v - 2.0 * jv).norm() <= 1e-13 * (2.0 * jv).norm());

        const Vector combo = jvp_from_site(m, t, s, 0.3 * v - 1.7 * w);
        const Vector expect = 0.3 * jv - 1.7 * jvp_from_site(m, t, s, w);
        CHECK((combo - expect).norm() <= 1e-12 * expect.norm());

        const double h = 1e-5 * (1.0 + v.norm());
        const Vector fd = central_difference(
            [&](double e) { return propagate_from_site(m, s, t.output_at(s) + e * v, kReferenceTokens); }, h);
        CHECK(relative_error(jv, fd) <= 1e-6);

        CHECK(jvp_from_site(m, s, kReferenceTokens, v) == jv);
    }
}

TEST_CASE("jvp_from_site rejects a trace from another model") {
    const auto& m = reference_model();
    const ActivationTrace t = forward(m, kReferenceTokens);
    const SiteId s{1, Slot::mlp_down};
    const TransformerModel other = apply(m, LoraSet({seeded_adapter(m, s, 5)}));
    CHECK_THROWS_AS(jvp_from_site(other, t, s, Matrix::Zero(3, 32)), StaleTraceError);
    CHECK_THROWS_AS(jvp_from_site(m, t, s, Matrix::Zero(3, 31)), DimensionError);
}

TEST_CASE("logit readout") {
    const auto& ref = reference_model();
    CHECK(logit(ref, Vector::Zero(32), 4) == 0.0);
    CHECK_THROWS_AS(logit(ref, Vector::Zero(32), 50), InputError);
    CHECK_THROWS_AS(logit(ref, Vector::Zero(31), 1), DimensionError);

    Matrix u = ref.unembedding();
    u.row(6).setZero();
    u(6, 0) = 1.0;
    const TransformerModel m(ref.config(), ref.embedding(), ref.layers(), ref.final_gain(), u);
    Vector h = Vector::Ones(32);
    h(0) = 3.0;
    CHECK(logit(m, h, 6) == 3.0);
}

TEST_CASE("model files round-trip exactly") {
    const auto& m = reference_model();
    const std::string text = serialize_model(m);
    const TransformerModel back = parse_model(text);
    CHECK(back == m);
    CHECK(back.fingerprint() == m.fingerprint());
    CHECK(serialize_model(back) == text);

    std::string wrong = text;
    wrong.replace(wrong.find("\"version\": 1"), 12, "\"version\": 9");
    CHECK_THROWS_AS(parse_model(wrong), FormatError);
    CHECK_THROWS_AS(parse_model("{}"), FormatError);
    CHECK_THROWS_AS(parse_model("not json"), FormatError);
}

TEST_CASE("hex floats round-trip") {
    for (double v : {0.0, -0.0, 1.5, -0.1, 1e-300, 6.02214076e23, 4.9406564584124654e-324}) {
        const std::string s = format_hexfloat(v);
        const double back = parse_hexfloat(s);
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    CHECK(format_hexfloat(3.0) == "0x1.8p+1");
    CHECK_THROWS_AS(parse_hexfloat("1.5"), FormatError);
    CHECK_THROWS_AS(parse_hexfloat("0x1.8q"), FormatError);
}
