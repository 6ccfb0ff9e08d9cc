#include "fan/image.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fan/error.h"

namespace fan {

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint8_t quantize(float v) {
    const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    return static_cast<std::uint8_t>(scaled);
}

Image read_png(const std::string& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw parse_error("undecodable image " + path + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw parse_error("undecodable image " + path + ": " + msg);
    }
    Image img(png.height, png.width);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        img.rgb[i] = static_cast<float>(buffer[i]) / 255.0f;
    }
    return img;
}

// P6 / P5 netpbm parser, binary variants with maxval 255 only.
Image read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw missing_input_error("cannot open image " + path);
    }
    auto next_token = [&is, &path]() {
        std::string tok;
        int ch = is.get();
        while (ch != EOF) {
            if (ch == '#') {
                while (ch != EOF && ch != '\n') ch = is.get();
            } else if (std::isspace(ch)) {
                ch = is.get();
            } else {
                break;
            }
        }
        while (ch != EOF && !std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            ch = is.get();
        }
        if (tok.empty()) {
            throw parse_error("undecodable image " + path + ": truncated header");
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P6" && magic != "P5") {
        throw parse_error("undecodable image " + path + ": unsupported magic " + magic);
    }
    const bool gray = magic == "P5";
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(next_token());
        h = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::exception&) {
        throw parse_error("undecodable image " + path + ": bad header field");
    }
    if (w == 0 || h == 0 || maxval != 255) {
        throw parse_error("undecodable image " + path + ": unsupported dimensions or maxval");
    }
    const std::size_t channels = gray ? 1 : 3;
    std::vector<std::uint8_t> buffer(h * w * channels);
    is.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(is.gcount()) != buffer.size()) {
        throw parse_error("undecodable image " + path + ": truncated pixel data");
    }
    Image img(h, w);
    for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::uint8_t raw = gray ? buffer[p] : buffer[p * 3 + c];
            img.rgb[p * 3 + c] = static_cast<float>(raw) / 255.0f;
        }
    }
    return img;
}

}  // namespace

Image read_image(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw missing_input_error("image file not found: " + path);
    }
    if (has_suffix(path, ".png")) {
        return read_png(path);
    }
    if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) {
        return read_pnm(path);
    }
    throw Error(ErrorClass::usage, "unsupported image extension: " + path);
}

void write_image(const std::string& path, const Image& image) {
    if (image.height == 0 || image.width == 0) {
        throw contract_error("write_image: empty image");
    }
    std::vector<std::uint8_t> buffer(image.rgb.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = quantize(image.rgb[i]);
    if (has_suffix(path, ".png")) {
        png_image png{};
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(image.width);
        png.height = static_cast<png_uint_32>(image.height);
        png.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
            throw Error(ErrorClass::generic,
                        std::string("cannot write image ") + path + ": " + png.message);
        }
        return;
    }
    if (has_suffix(path, ".ppm")) {
        std::ofstream os(path, std::ios::binary);
        if (!os) {
            throw Error(ErrorClass::generic, "cannot write image " + path);
        }
        os << "P6\n" << image.width << " " << image.height << "\n255\n";
        os.write(reinterpret_cast<const char*>(buffer.data()),
                 static_cast<std::streamsize>(buffer.size()));
        if (!os) {
            throw Error(ErrorClass::generic, "cannot write image " + path);
        }
        return;
    }
    throw Error(ErrorClass::usage, "unsupported image extension: " + path);
}

Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
    if (src.height == 0 || src.width == 0) {
        throw contract_error("resize_bilinear: empty image");
    }
    if (out_h == 0 || out_w == 0) {
        throw contract_error("resize_bilinear: empty target");
    }
    if (out_h == src.height && out_w == src.width) {
        return src;
    }
    Image dst(out_h, out_w);
    const float sy = static_cast<float>(src.height) / static_cast<float>(out_h);
    const float sx = static_cast<float>(src.width) / static_cast<float>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const float cy = std::clamp(fy, 0.0f, static_cast<float>(src.height - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const float wy = cy - static_cast<float>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            const float cx = std::clamp(fx, 0.0f, static_cast<float>(src.width - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const float wx = cx - static_cast<float>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const float top = src.at(y0, x0, c) * (1.0f - wx) + src.at(y0, x1, c) * wx;
                const float bot = src.at(y1, x0, c) * (1.0f - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return dst;
}

}  // namespace fan
