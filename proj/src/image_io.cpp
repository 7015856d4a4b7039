#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dermbench/patchworks.hpp"

namespace dermbench {

PatchImage PatchImage::from_rgb8(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != w * h * kChannels) throw Error("from_rgb8: buffer size does not match dimensions");
    PatchImage img(w, h);
    for (std::size_t i = 0; i < rgb.size(); ++i) img.data[i] = static_cast<float>(rgb[i]) / 255.0f;
    return img;
}

namespace {

// Next whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

PatchImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image " + path);
    const std::string magic = pnm_token(in);
    if (magic != "P6" && magic != "P3") throw Error(path + ": not a PPM (P3/P6) image");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pnm_token(in));
        h = std::stoul(pnm_token(in));
        maxval = std::stoul(pnm_token(in));
    } catch (const std::exception&) {
        throw Error(path + ": malformed PPM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw Error(path + ": unsupported PPM geometry or depth");

    std::vector<std::uint8_t> rgb(w * h * 3);
    if (magic == "P6") {
        in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
        if (static_cast<std::size_t>(in.gcount()) != rgb.size()) throw Error(path + ": truncated PPM data");
    } else {
        for (auto& v : rgb) {
            const std::string tok = pnm_token(in);
            if (tok.empty()) throw Error(path + ": truncated PPM data");
            v = static_cast<std::uint8_t>(std::stoul(tok));
        }
    }
    PatchImage img(w, h);
    for (std::size_t i = 0; i < rgb.size(); ++i) img.data[i] = static_cast<float>(rgb[i]) / static_cast<float>(maxval);
    return img;
}

PatchImage read_png(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw Error(path + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error(path + ": " + msg);
    }
    return PatchImage::from_rgb8(image.width, image.height, rgb);
}

}  // namespace

PatchImage read_image(const std::string& path) {
    const std::string ext = lowercase(std::filesystem::path(path).extension().string());
    if (ext == ".png") return read_png(path);
    return read_ppm(path);
}

void write_ppm(const PatchImage& image, const std::string& path) {
    std::ostringstream out;
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::string body(image.data.size(), '\0');
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const float v = std::clamp(image.data[i], 0.0f, 1.0f);
        body[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
    out << body;
    write_text_file(path, out.str());
}

}  // namespace dermbench
