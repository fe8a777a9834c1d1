#include "semo/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace semo {

namespace {

std::uint8_t to_byte(float v) {
    v = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void png_chunk(std::ofstream& f, const char* type, const std::vector<std::uint8_t>& data) {
    std::vector<std::uint8_t> head;
    be32(head, static_cast<std::uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    std::uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<std::uint8_t> tail;
    be32(tail, crc);
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void write_png_impl(const std::filesystem::path& path, const std::uint8_t* pixels, int h, int w,
                    int channels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write " + path.string());
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr;
    be32(ihdr, static_cast<std::uint32_t>(w));
    be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                               // bit depth
    ihdr.push_back(channels == 3 ? 2 : 0);           // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(f, "IHDR", ihdr);

    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (static_cast<std::size_t>(w) * channels + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = pixels + static_cast<std::size_t>(y) * w * channels;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(w) * channels);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw io_error("png: zlib compression failed");
    comp.resize(comp_len);
    png_chunk(f, "IDAT", comp);
    png_chunk(f, "IEND", {});
}

// --- GIF -------------------------------------------------------------

struct LzwWriter {
    std::vector<std::uint8_t>& out;
    std::uint32_t bits = 0;
    int nbits = 0;
    std::vector<std::uint8_t> block;

    explicit LzwWriter(std::vector<std::uint8_t>& o) : out(o) {}
    void put(int code, int width) {
        bits |= static_cast<std::uint32_t>(code) << nbits;
        nbits += width;
        while (nbits >= 8) {
            block.push_back(static_cast<std::uint8_t>(bits & 0xff));
            bits >>= 8;
            nbits -= 8;
            if (block.size() == 255) flush_block();
        }
    }
    void flush_block() {
        if (block.empty()) return;
        out.push_back(static_cast<std::uint8_t>(block.size()));
        out.insert(out.end(), block.begin(), block.end());
        block.clear();
    }
    void finish() {
        if (nbits > 0) {
            block.push_back(static_cast<std::uint8_t>(bits & 0xff));
            if (block.size() == 255) flush_block();
        }
        flush_block();
        out.push_back(0);  // block terminator
    }
};

// GIF LZW with a fresh dictionary per image, 8-bit min code size.
void gif_lzw(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& indices) {
    const int min_code = 8;
    const int clear = 1 << min_code;      // 256
    const int eoi = clear + 1;            // 257
    out.push_back(min_code);
    LzwWriter w(out);

    std::vector<std::int32_t> table;  // (prefix<<8 | byte) -> code, via map
    std::vector<std::pair<std::int64_t, int>> dict;
    auto reset = [&]() { dict.clear(); };
    auto find = [&](std::int64_t key) -> int {
        for (auto it = dict.rbegin(); it != dict.rend(); ++it)
            if (it->first == key) return it->second;
        return -1;
    };
    (void)table;

    int width = min_code + 1;
    int next_code = eoi + 1;
    reset();
    w.put(clear, width);
    int prefix = indices.empty() ? 0 : indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
        int c = indices[i];
        std::int64_t key = (static_cast<std::int64_t>(prefix) << 8) | c;
        int code = find(key);
        if (code >= 0) {
            prefix = code;
            continue;
        }
        w.put(prefix, width);
        dict.emplace_back(key, next_code);
        ++next_code;
        if (next_code == (1 << width) + 1 && width < 12) ++width;
        if (next_code >= 4095) {
            w.put(clear, width);
            reset();
            width = min_code + 1;
            next_code = eoi + 1;
        }
        prefix = c;
    }
    if (!indices.empty()) w.put(prefix, width);
    w.put(eoi, width);
    w.finish();
}

std::uint8_t quantize6(float v) {
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v * 5.999f), 0, 5));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Frame& frame) {
    int h = frame.shape[0], w = frame.shape[1], c = frame.shape[2];
    if (c != 3) throw io_error("write_png: expected 3 channels");
    std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(frame.data[i]);
    write_png_impl(path, px.data(), h, w, 3);
}

void write_png_gray(const std::filesystem::path& path, const Tensor<float>& map) {
    int h = map.shape[0], w = map.shape[1];
    float lo = map.data[0], hi = map.data[0];
    for (float v : map.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    float range = hi - lo > 1e-12f ? hi - lo : 1.0f;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte((map.data[i] - lo) / range);
    write_png_impl(path, px.data(), h, w, 1);
}

void write_gif(const std::filesystem::path& path, const std::vector<Frame>& frames, int delay_cs) {
    if (frames.empty()) throw io_error("write_gif: no frames");
    int h = frames[0].shape[0], w = frames[0].shape[1];
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write " + path.string());

    auto u16 = [&](int v) {
        f.put(static_cast<char>(v & 0xff));
        f.put(static_cast<char>((v >> 8) & 0xff));
    };
    f.write("GIF89a", 6);
    u16(w);
    u16(h);
    f.put(static_cast<char>(0xf7));  // global color table, 256 entries
    f.put(0);
    f.put(0);
    // 6x6x6 cube + 40 grayscale fill
    for (int i = 0; i < 256; ++i) {
        if (i < 216) {
            f.put(static_cast<char>((i / 36) * 51));
            f.put(static_cast<char>(((i / 6) % 6) * 51));
            f.put(static_cast<char>((i % 6) * 51));
        } else {
            char g = static_cast<char>((i - 216) * 255 / 39);
            f.put(g);
            f.put(g);
            f.put(g);
        }
    }
    // looping
    f.put(0x21);
    f.put(static_cast<char>(0xff));
    f.put(11);
    f.write("NETSCAPE2.0", 11);
    f.put(3);
    f.put(1);
    u16(0);
    f.put(0);

    for (const auto& frame : frames) {
        f.put(0x21);
        f.put(static_cast<char>(0xf9));
        f.put(4);
        f.put(0);
        u16(delay_cs);
        f.put(0);
        f.put(0);
        f.put(0x2c);
        u16(0);
        u16(0);
        u16(w);
        u16(h);
        f.put(0);
        std::vector<std::uint8_t> idx(static_cast<std::size_t>(h) * w);
        for (int p = 0; p < h * w; ++p) {
            float r = frame.data[static_cast<std::size_t>(p) * 3];
            float g2 = frame.data[static_cast<std::size_t>(p) * 3 + 1];
            float b = frame.data[static_cast<std::size_t>(p) * 3 + 2];
            idx[static_cast<std::size_t>(p)] =
                static_cast<std::uint8_t>(quantize6(r) * 36 + quantize6(g2) * 6 + quantize6(b));
        }
        std::vector<std::uint8_t> data;
        gif_lzw(data, idx);
        f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    }
    f.put(0x3b);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write " + path.string());
    f << text;
}

void write_motion_bin(const std::filesystem::path& path, const Tensor<float>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write " + path.string());
    f.write("SEMO", 4);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    u32(1);
    u32(0);  // unnamed
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Frame clamp01(Frame f) {
    for (auto& v : f.data) v = std::clamp(v, 0.0f, 1.0f);
    return f;
}

}  // namespace semo
