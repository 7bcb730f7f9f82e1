#include <doctest.h>

#include <cstring>

#include "popf/errors.hpp"
#include "popf/io.hpp"
#include "popf/sdae.hpp"
#include "support.hpp"

using namespace popf;
using namespace popf::sdae;

namespace {

SdaeModel sample_model() {
    auto m = SdaeModel::create(4, {5, 3}, 2, 0.15, 77);
    m.x_bounds = {VectorXd::LinSpaced(4, -1, 1), VectorXd::LinSpaced(4, 2, 5)};
    m.y_bounds = {VectorXd::Constant(2, 0.25), VectorXd::Constant(2, 0.25)};
    m.top.b << 0.1, -0.2;
    return m;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("save and load round trip bit for bit") {
    const auto m = sample_model();
    const auto path = test::scratch("ckpt") + "/model.sdae";
    save_model(m, path);
    const auto r = load_model(path);
    CHECK(r.widths() == m.widths());
    CHECK(r.corruption_level == m.corruption_level);
    CHECK(r.x_bounds.min == m.x_bounds.min);
    CHECK(r.y_bounds.max == m.y_bounds.max);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(r.layers[l].w == m.layers[l].w);
        CHECK(r.layers[l].b == m.layers[l].b);
    }
    const MatrixXd x = MatrixXd::Random(9, 4).cwiseAbs();
    CHECK((predict(r, x).array() == predict(m, x).array()).all());
    CHECK(serialize_model(r) == serialize_model(m));
}

TEST_CASE("damaged files are rejected") {
    const auto bytes = serialize_model(sample_model());
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 9)), CorruptFile);
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, 10)), CorruptFile);
    CHECK_THROWS_AS(deserialize_model("hello world, not a model"), CorruptFile);
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    CHECK_THROWS_AS(deserialize_model(flipped), CorruptFile);
}

TEST_CASE("future format version is refused") {
    auto bytes = serialize_model(sample_model());
    const std::uint32_t v = kCheckpointVersion + 1;
    std::memcpy(bytes.data() + 8, &v, 4);
    CHECK_THROWS_AS(deserialize_model(bytes), FormatVersionMismatch);
}

TEST_CASE("missing file is an IO error") {
    CHECK_THROWS_AS(load_model(test::scratch("ckpt_missing") + "/nope.sdae"), IoError);
}

}
