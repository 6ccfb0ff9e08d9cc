#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "fan/error.h"
#include "fan/features.h"
#include "fan/frames.h"
#include "fan/image.h"
#include "fan/kernels.h"
#include "fan/rng.h"

using fan::Error;
using fan::ErrorClass;
using fan::FrameSequence;
using fan::GroupId;
using fan::Image;

namespace fs = std::filesystem;

namespace {

FrameSequence make_sequence(std::size_t t, std::size_t h, std::size_t w) {
    FrameSequence seq;
    seq.t = t;
    seq.height = h;
    seq.width = w;
    seq.frames = fan::Tensor<float>({t, h, w, 3});
    return seq;
}

FrameSequence random_sequence(fan::Rng& rng, std::size_t t, std::size_t h, std::size_t w) {
    FrameSequence seq = make_sequence(t, h, w);
    for (std::size_t i = 0; i < seq.frames.numel(); ++i)
        seq.frames[i] = static_cast<float>(rng.uniform());
    return seq;
}

// Smooth periodic texture; period divides the image size so wraparound
// translation is seamless.
float texture(std::size_t y, std::size_t x) {
    const float pi2 = 2.0f * std::numbers::pi_v<float>;
    return 0.5f + 0.17f * std::sin(pi2 * static_cast<float>(x) / 16.0f) +
           0.17f * std::cos(pi2 * static_cast<float>(y) / 16.0f);
}

FrameSequence translated_pair(std::size_t h, std::size_t w, int dx, int dy) {
    FrameSequence seq = make_sequence(2, h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const float v0 = texture(y, x);
            const std::size_t sy = static_cast<std::size_t>(
                ((static_cast<int>(y) - dy) % static_cast<int>(h) + static_cast<int>(h)) %
                static_cast<int>(h));
            const std::size_t sx = static_cast<std::size_t>(
                ((static_cast<int>(x) - dx) % static_cast<int>(w) + static_cast<int>(w)) %
                static_cast<int>(w));
            const float v1 = texture(sy, sx);
            for (std::size_t c = 0; c < 3; ++c) {
                seq.at(0, y, x, c) = v0;
                seq.at(1, y, x, c) = v1;
            }
        }
    }
    return seq;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("image png round trip is exact at 8-bit resolution") {
    TempDir dir("fan_img_test");
    Image img(5, 7);
    for (std::size_t i = 0; i < img.rgb.size(); ++i)
        img.rgb[i] = static_cast<float>((i * 37) % 256) / 255.0f;
    const std::string path = (dir.path / "a.png").string();
    fan::write_image(path, img);
    const Image back = fan::read_image(path);
    REQUIRE(back.height == 5);
    REQUIRE(back.width == 7);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);
}

TEST_CASE("image ppm round trip and pgm channel replication") {
    TempDir dir("fan_ppm_test");
    Image img(3, 4);
    for (std::size_t i = 0; i < img.rgb.size(); ++i)
        img.rgb[i] = static_cast<float>((i * 11) % 256) / 255.0f;
    const std::string path = (dir.path / "a.ppm").string();
    fan::write_image(path, img);
    const Image back = fan::read_image(path);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);

    std::ofstream pgm(dir.path / "g.pgm", std::ios::binary);
    pgm << "P5\n# comment\n2 2\n255\n";
    const unsigned char pix[4] = {0, 85, 170, 255};
    pgm.write(reinterpret_cast<const char*>(pix), 4);
    pgm.close();
    const Image gray = fan::read_image((dir.path / "g.pgm").string());
    REQUIRE(gray.height == 2);
    REQUIRE(gray.width == 2);
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(gray.rgb[p * 3 + 0] == gray.rgb[p * 3 + 1]);
        CHECK(gray.rgb[p * 3 + 1] == gray.rgb[p * 3 + 2]);
        CHECK(gray.rgb[p * 3] == doctest::Approx(static_cast<float>(pix[p]) / 255.0f));
    }
}

TEST_CASE("image read failures carry distinct error classes") {
    TempDir dir("fan_imgerr_test");
    try {
        fan::read_image((dir.path / "missing.png").string());
        FAIL("expected missing input error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::missing_input);
    }
    std::ofstream bad(dir.path / "bad.png", std::ios::binary);
    bad << "this is not a png";
    bad.close();
    try {
        fan::read_image((dir.path / "bad.png").string());
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::parse);
        CHECK(std::string(e.what()).find("bad.png") != std::string::npos);
    }
}

TEST_CASE("resize keeps identity, constants, and known gradient values") {
    Image img(2, 2);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = 0.25f * static_cast<float>(i % 4);
    const Image same = fan::resize_bilinear(img, 2, 2);
    CHECK(same.rgb == img.rgb);

    Image flat(4, 4);
    for (float& v : flat.rgb) v = 0.6f;
    const Image up = fan::resize_bilinear(flat, 9, 5);
    for (float v : up.rgb) CHECK(v == doctest::Approx(0.6f));

    Image grad(1, 2);
    for (std::size_t c = 0; c < 3; ++c) {
        grad.at(0, 0, c) = 0.0f;
        grad.at(0, 1, c) = 1.0f;
    }
    const Image wide = fan::resize_bilinear(grad, 1, 4);
    CHECK(wide.at(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(wide.at(0, 1, 0) == doctest::Approx(0.25f));
    CHECK(wide.at(0, 2, 0) == doctest::Approx(0.75f));
    CHECK(wide.at(0, 3, 0) == doctest::Approx(1.0f));
}

TEST_CASE("frame sequence loader reads indexed frames with resize") {
    TempDir dir("fan_frames_test");
    fan::Rng rng(5);
    const std::size_t t = 20;
    for (std::size_t i = 1; i <= t; ++i) {
        Image img(16, 12);
        for (float& v : img.rgb) v = static_cast<float>(rng.uniform());
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
        fan::write_image((dir.path / name).string(), img);
    }
    const FrameSequence seq = fan::load_frame_sequence(dir.path.string(), t, 8, 6);
    CHECK(seq.t == t);
    CHECK(seq.height == 8);
    CHECK(seq.width == 6);
    CHECK(seq.frames.dims() == std::vector<std::size_t>{t, 8, 6, 3});
    for (std::size_t i = 0; i < seq.frames.numel(); ++i) {
        CHECK(seq.frames[i] >= 0.0f);
        CHECK(seq.frames[i] <= 1.0f);
    }
}

TEST_CASE("frame sequence loader rejects count mismatches") {
    TempDir dir("fan_frames_miss");
    for (std::size_t i = 1; i <= 19; ++i) {
        Image img(4, 4);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
        fan::write_image((dir.path / name).string(), img);
    }
    try {
        fan::load_frame_sequence(dir.path.string(), 20, 4, 4);
        FAIL("expected count mismatch");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::contract);
        CHECK(std::string(e.what()).find("count mismatch") != std::string::npos);
    }
    // extra frame beyond the expected range also fails
    try {
        fan::load_frame_sequence(dir.path.string(), 18, 4, 4);
        FAIL("expected count mismatch");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::contract);
    }
    try {
        fan::load_frame_sequence((dir.path / "nope").string(), 20, 4, 4);
        FAIL("expected missing input");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::missing_input);
    }
}

TEST_CASE("frame sequence loader names undecodable files") {
    TempDir dir("fan_frames_bad");
    fan::write_image((dir.path / "frame_00001.png").string(), Image(4, 4));
    std::ofstream bad(dir.path / "frame_00002.png", std::ios::binary);
    bad << "garbage";
    bad.close();
    try {
        fan::load_frame_sequence(dir.path.string(), 2, 4, 4);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::parse);
        CHECK(std::string(e.what()).find("frame_00002.png") != std::string::npos);
    }
}

TEST_CASE("frame sequence writer round trips through the loader") {
    TempDir dir("fan_frames_rt");
    fan::Rng rng(6);
    FrameSequence seq = make_sequence(3, 6, 5);
    for (std::size_t i = 0; i < seq.frames.numel(); ++i)
        seq.frames[i] = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    fan::write_frame_sequence(dir.path.string(), seq);
    const FrameSequence back = fan::load_frame_sequence(dir.path.string(), 3, 6, 5);
    for (std::size_t i = 0; i < seq.frames.numel(); ++i)
        CHECK(back.frames[i] == seq.frames[i]);
}

TEST_CASE("frames stream lays pixels out as channel planes") {
    fan::Rng rng(7);
    const FrameSequence seq = random_sequence(rng, 3, 4, 5);
    const fan::FeatureStream s = fan::frames_stream(seq);
    CHECK(s.group == GroupId::frames);
    CHECK(s.steps() == 3);
    CHECK(s.dim() == 3 * 4 * 5);
    CHECK(s.channels == 3);
    const std::size_t plane = 4 * 5;
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 5; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    CHECK(s.values.at2(t, c * plane + y * 5 + x) == seq.at(t, y, x, c));
}

TEST_CASE("residuals match the subtraction oracle with a zero first step") {
    fan::Rng rng(8);
    const FrameSequence seq = random_sequence(rng, 5, 6, 4);
    const fan::FeatureStream r = fan::frame_residuals(seq);
    CHECK(r.group == GroupId::residuals);
    CHECK(r.steps() == 5);
    const std::size_t plane = 6 * 4;
    for (std::size_t d = 0; d < r.dim(); ++d) CHECK(r.values.at2(0, d) == 0.0f);
    for (std::size_t t = 1; t < 5; ++t)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 4; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    CHECK(r.values.at2(t, c * plane + y * 4 + x) ==
                          seq.at(t, y, x, c) - seq.at(t - 1, y, x, c));
}

TEST_CASE("residuals of identical and constant-shift frames") {
    FrameSequence seq = make_sequence(3, 4, 4);
    for (std::size_t i = 0; i < seq.frames.numel(); ++i) seq.frames[i] = 0.1f;
    float* last = seq.frames.data() + 2 * 4 * 4 * 3;
    for (std::size_t i = 0; i < 4 * 4 * 3; ++i) last[i] = 0.3f;
    const fan::FeatureStream r = fan::frame_residuals(seq);
    for (std::size_t d = 0; d < r.dim(); ++d) {
        CHECK(r.values.at2(1, d) == 0.0f);
        CHECK(r.values.at2(2, d) == doctest::Approx(0.2f));
    }
}

TEST_CASE("residual anti-symmetry under adjacent frame swap") {
    fan::Rng rng(9);
    FrameSequence seq = random_sequence(rng, 2, 5, 5);
    const fan::FeatureStream fwd = fan::frame_residuals(seq);
    // swap the two frames
    const std::size_t n = 5 * 5 * 3;
    for (std::size_t i = 0; i < n; ++i)
        std::swap(seq.frames[i], seq.frames[n + i]);
    const fan::FeatureStream rev = fan::frame_residuals(seq);
    for (std::size_t d = 0; d < fwd.dim(); ++d)
        CHECK(rev.values.at2(1, d) == -fwd.values.at2(1, d));
}

TEST_CASE("residuals require at least two frames") {
    const FrameSequence seq = make_sequence(1, 4, 4);
    CHECK_THROWS_AS(fan::frame_residuals(seq), Error);
    CHECK_THROWS_AS(fan::lucas_kanade_flow(seq), Error);
    CHECK_THROWS_AS(fan::scene_change_features(seq), Error);
}

TEST_CASE("optical flow is zero for a static scene") {
    fan::Rng rng(10);
    FrameSequence seq = random_sequence(rng, 3, 8, 8);
    const std::size_t n = 8 * 8 * 3;
    for (std::size_t t = 1; t < 3; ++t)
        for (std::size_t i = 0; i < n; ++i) seq.frames[t * n + i] = seq.frames[i];
    const fan::FeatureStream f = fan::lucas_kanade_flow(seq);
    CHECK(f.group == GroupId::optical_flow);
    CHECK(f.dim() == 2 * 8 * 8);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t d = 0; d < f.dim(); ++d) CHECK(f.values.at2(t, d) == 0.0f);
}

TEST_CASE("optical flow is zero on uniform frames via the degeneracy rule") {
    FrameSequence seq = make_sequence(2, 6, 6);
    for (std::size_t i = 0; i < 6 * 6 * 3; ++i) seq.frames[i] = 0.2f;
    float* second = seq.frames.data() + 6 * 6 * 3;
    for (std::size_t i = 0; i < 6 * 6 * 3; ++i) second[i] = 0.8f;
    const fan::FeatureStream f = fan::lucas_kanade_flow(seq);
    for (std::size_t d = 0; d < f.dim(); ++d) CHECK(f.values.at2(1, d) == 0.0f);
}

TEST_CASE("optical flow recovers translations of textured content") {
    const std::size_t h = 32, w = 32, plane = h * w;
    const struct {
        int dx, dy;
    } shifts[] = {{1, 0}, {0, 1}, {2, 1}, {-1, 1}, {-2, -2}};
    for (const auto& s : shifts) {
        CAPTURE(s.dx);
        CAPTURE(s.dy);
        const FrameSequence seq = translated_pair(h, w, s.dx, s.dy);
        const fan::FeatureStream f = fan::lucas_kanade_flow(seq, 5);
        double su = 0.0, sv = 0.0;
        std::size_t used = 0;
        for (std::size_t p = 0; p < plane; ++p) {
            const float u = f.values.at2(1, p);
            const float v = f.values.at2(1, plane + p);
            if (u == 0.0f && v == 0.0f) continue;  // degenerate pixels
            su += u;
            sv += v;
            ++used;
        }
        REQUIRE(used > plane / 3);
        CHECK(std::abs(su / used - s.dx) < 0.25);
        CHECK(std::abs(sv / used - s.dy) < 0.25);
    }
}

TEST_CASE("optical flow rejects even or tiny windows") {
    fan::Rng rng(12);
    const FrameSequence seq = random_sequence(rng, 2, 6, 6);
    CHECK_THROWS_AS(fan::lucas_kanade_flow(seq, 4), Error);
    CHECK_THROWS_AS(fan::lucas_kanade_flow(seq, 1), Error);
    CHECK_NOTHROW(fan::lucas_kanade_flow(seq, 3));
}

TEST_CASE("optical flow kernel parallel schedule matches serial exactly") {
    fan::Rng rng(13);
    const std::size_t h = 80, w = 80;
    std::vector<float> prev(h * w), cur(h * w);
    for (float& v : prev) v = static_cast<float>(rng.uniform());
    for (float& v : cur) v = static_cast<float>(rng.uniform());
    std::vector<float> us(h * w), vs(h * w), up(h * w), vp(h * w);
    fan::kernels::serial::lk_flow_field(prev.data(), cur.data(), h, w, std::size_t{5}, 1e-4f,
                                        us.data(), vs.data());
    fan::kernels::lk_flow_field(prev.data(), cur.data(), h, w, std::size_t{5}, 1e-4f, up.data(),
                                vp.data());
    CHECK(us == up);
    CHECK(vs == vp);
}

TEST_CASE("extractors are pure functions of the frames") {
    fan::Rng rng(14);
    const FrameSequence seq = random_sequence(rng, 4, 10, 10);
    const fan::FeatureStream a = fan::lucas_kanade_flow(seq);
    const fan::FeatureStream b = fan::lucas_kanade_flow(seq);
    CHECK(a.values.vec() == b.values.vec());
    const fan::FeatureStream c = fan::scene_change_features(seq);
    const fan::FeatureStream d = fan::scene_change_features(seq);
    CHECK(c.values.vec() == d.values.vec());
}

TEST_CASE("scene change distance is zero for identical frames and 2 for disjoint") {
    FrameSequence seq = make_sequence(3, 8, 8);
    // frames 0,1 all black; frame 2 all white
    float* last = seq.frames.data() + 2 * 8 * 8 * 3;
    for (std::size_t i = 0; i < 8 * 8 * 3; ++i) last[i] = 1.0f;
    const fan::FeatureStream s = fan::scene_change_features(seq, 8);
    CHECK(s.group == GroupId::scene_change);
    CHECK(s.dim() == 3);
    CHECK(s.values.at2(0, 0) == 0.0f);  // boundary convention
    CHECK(s.values.at2(1, 0) == doctest::Approx(0.0));
    CHECK(s.values.at2(2, 0) == doctest::Approx(2.0));
    // one occupied bin out of 512 in every frame
    for (std::size_t t = 0; t < 3; ++t)
        CHECK(s.values.at2(t, 1) == doctest::Approx(1.0 / 512.0));
    CHECK(s.values.at2(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("scene change histogram matches a brute force counting oracle") {
    fan::Rng rng(15);
    const std::size_t b = 4, h = 8, w = 8, plane = h * w;
    const FrameSequence seq = random_sequence(rng, 4, h, w);
    const fan::FeatureStream s = fan::scene_change_features(seq, b);

    std::vector<std::vector<double>> hist(4, std::vector<double>(b * b * b, 0.0));
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t idx = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = seq.frames[(t * plane + p) * 3 + c];
                std::size_t bin = static_cast<std::size_t>(v * b);
                if (bin >= b) bin = b - 1;
                idx = idx * b + bin;
            }
            hist[t][idx] += 1.0;
        }
    }
    for (auto& hh : hist)
        for (double& v : hh) v /= static_cast<double>(plane);

    for (std::size_t t = 0; t < 4; ++t) {
        double expect_d = 0.0;
        std::size_t nz = 0, nz_prev = 0;
        for (std::size_t i = 0; i < hist[t].size(); ++i) {
            if (t > 0) expect_d += std::abs(hist[t][i] - hist[t - 1][i]);
            if (hist[t][i] > 0.0) ++nz;
            if (t > 0 && hist[t - 1][i] > 0.0) ++nz_prev;
        }
        const double expect_n = static_cast<double>(nz) / static_cast<double>(b * b * b);
        // plane size is a power of two, so the incremental mass sums are exact
        if (t > 0) {
            CHECK(s.values.at2(t, 0) == doctest::Approx(expect_d).epsilon(1e-12));
            const double expect_nd =
                expect_n - static_cast<double>(nz_prev) / static_cast<double>(b * b * b);
            CHECK(s.values.at2(t, 2) == doctest::Approx(expect_nd).epsilon(1e-12));
        }
        CHECK(s.values.at2(t, 1) == doctest::Approx(expect_n).epsilon(1e-12));
    }
}

TEST_CASE("scene change distance stays within its theoretical range") {
    fan::Rng rng(16);
    for (int trial = 0; trial < 5; ++trial) {
        const FrameSequence seq = random_sequence(rng, 6, 7, 9);
        const fan::FeatureStream s = fan::scene_change_features(seq, 8);
        for (std::size_t t = 0; t < 6; ++t) {
            CHECK(s.values.at2(t, 0) >= 0.0f);
            CHECK(s.values.at2(t, 0) <= 2.0f);
        }
    }
    FrameSequence tiny = make_sequence(2, 2, 2);
    CHECK_THROWS_AS(fan::scene_change_features(tiny, 1), Error);
}

TEST_CASE("pose ingestion normalizes coordinates and flattens") {
    TempDir dir("fan_pose_test");
    const std::string path = (dir.path / "pose.json").string();
    std::ofstream os(path);
    os << "[";
    for (int t = 0; t < 20; ++t) {
        if (t) os << ",";
        os << "[";
        for (int k = 0; k < 17; ++k) {
            if (k) os << ",";
            os << "[" << (k * 2) << "," << (t % 24) << ",0.5]";
        }
        os << "]";
    }
    os << "]";
    os.close();
    const fan::FeatureStream s = fan::load_pose_keypoints(path, 20, 64, 24);
    CHECK(s.group == GroupId::body_pose);
    CHECK(s.steps() == 20);
    CHECK(s.dim() == 51);
    CHECK(s.values.at2(3, 0) == doctest::Approx(0.0));
    CHECK(s.values.at2(3, 3) == doctest::Approx(2.0 / 64.0));
    CHECK(s.values.at2(3, 1) == doctest::Approx(3.0 / 24.0));
    CHECK(s.values.at2(3, 2) == doctest::Approx(0.5));
}

TEST_CASE("pose ingestion handles empty detections and bad files") {
    TempDir dir("fan_pose_err");
    const std::string empty_path = (dir.path / "empty.json").string();
    {
        std::ofstream os(empty_path);
        os << "[[],[],[]]";
    }
    const fan::FeatureStream s = fan::load_pose_keypoints(empty_path, 3, 10, 10, 4);
    CHECK(s.dim() == 12);
    for (std::size_t i = 0; i < s.values.numel(); ++i) CHECK(s.values[i] == 0.0f);
    // without an explicit K the count cannot be inferred
    CHECK_THROWS_AS(fan::load_pose_keypoints(empty_path, 3, 10, 10), Error);

    const std::string oob_path = (dir.path / "oob.json").string();
    {
        std::ofstream os(oob_path);
        os << "[[[10,0,1.0]],[[0,0,1.0]]]";  // x == W is out of bounds
    }
    try {
        fan::load_pose_keypoints(oob_path, 2, 10, 10);
        FAIL("expected bounds error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::contract);
        CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    }

    const std::string mismatch_path = (dir.path / "mismatch.json").string();
    {
        std::ofstream os(mismatch_path);
        os << "[[[1,1,1.0]]]";
    }
    CHECK_THROWS_AS(fan::load_pose_keypoints(mismatch_path, 2, 10, 10), Error);

    const std::string bad_path = (dir.path / "bad.json").string();
    {
        std::ofstream os(bad_path);
        os << "{not json";
    }
    try {
        fan::load_pose_keypoints(bad_path, 1, 10, 10);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::parse);
    }
    try {
        fan::load_pose_keypoints((dir.path / "nope.json").string(), 1, 10, 10);
        FAIL("expected missing input");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::missing_input);
    }
}

TEST_CASE("all extractors produce exactly T steps with finite values") {
    fan::Rng rng(17);
    const FrameSequence seq = random_sequence(rng, 6, 9, 7);
    for (const auto& s :
         {fan::frames_stream(seq), fan::frame_residuals(seq), fan::lucas_kanade_flow(seq),
          fan::scene_change_features(seq)}) {
        CHECK(s.steps() == 6);
        CHECK(s.values.all_finite());
    }
}
