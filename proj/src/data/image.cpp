#include "gccpm/image.hpp"

namespace gccpm {

Image::Image(int w, int h, Rgb fill) : width(w), height(h)
{
    if (w <= 0 || h <= 0)
        fail(ErrorKind::shape, "image extents must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
    pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill[0];
        pixels[i + 1] = fill[1];
        pixels[i + 2] = fill[2];
    }
}

void Image::set(int x, int y, Rgb color)
{
    for (int c = 0; c < 3; ++c)
        at(x, y, c) = color[c];
}

float normalize_pixel(std::uint8_t p)
{
    return (static_cast<float>(p) - 128.0f) / 256.0f;
}

Tensor images_to_tensor(const std::vector<const Image*>& images)
{
    if (images.empty())
        fail(ErrorKind::shape, "images_to_tensor: empty batch");
    const int w = images.front()->width;
    const int h = images.front()->height;
    Tensor out({static_cast<int>(images.size()), 3, h, w});
    auto dst = out.mutable_data();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (img.width != w || img.height != h)
            fail(ErrorKind::shape, "images_to_tensor: mixed image sizes in one batch");
        for (int c = 0; c < 3; ++c) {
            float* o = dst.data() + (n * 3 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                o[i] = normalize_pixel(img.pixels[i * 3 + c]);
        }
    }
    return out;
}

Tensor image_to_tensor(const Image& image)
{
    return images_to_tensor({&image});
}

} // namespace gccpm
