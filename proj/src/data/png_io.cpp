#include "gccpm/data.hpp"

#include <png.h>

#include <cstring>

namespace gccpm {

Image read_png(const std::filesystem::path& path)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        fail(ErrorKind::io, "cannot read PNG " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    Image out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        fail(ErrorKind::io, "cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

namespace {

void write(const std::filesystem::path& path, int width, int height, std::uint32_t format, const void* data)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = format;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, data, 0, nullptr))
        fail(ErrorKind::io, "cannot write PNG " + path.string() + ": " + img.message);
}

} // namespace

void write_png(const std::filesystem::path& path, const Image& image)
{
    write(path, image.width, image.height, PNG_FORMAT_RGB, image.pixels.data());
}

void write_png_gray(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& values)
{
    if (values.size() != static_cast<std::size_t>(width) * height)
        fail(ErrorKind::shape, "write_png_gray: size mismatch");
    write(path, width, height, PNG_FORMAT_GRAY, values.data());
}

} // namespace gccpm
