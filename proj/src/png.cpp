#include "jeca/png.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace jeca::png {

namespace {

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_u32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& body) {
    put_u32(out, static_cast<uint32_t>(body.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc32(out.data() + start, out.size() - start));
}

// ---- inflate ----------------------------------------------------------------

struct BitReader {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
    uint32_t bitbuf = 0;
    int bitcnt = 0;

    uint32_t bits(int n) {
        while (bitcnt < n) {
            if (pos >= size) throw std::runtime_error("png: truncated deflate stream");
            bitbuf |= uint32_t(data[pos++]) << bitcnt;
            bitcnt += 8;
        }
        uint32_t v = bitbuf & ((1u << n) - 1);
        bitbuf >>= n;
        bitcnt -= n;
        return v;
    }
    void align_byte() {
        bitbuf = 0;
        bitcnt = 0;
    }
};

struct Huffman {
    // Canonical Huffman decode tables per RFC 1951.
    std::array<uint16_t, 16> count{};
    std::vector<uint16_t> symbols;

    void build(const uint8_t* lengths, int n) {
        count.fill(0);
        for (int i = 0; i < n; ++i) count[lengths[i]]++;
        count[0] = 0;
        std::array<uint16_t, 16> offs{};
        for (int i = 1; i < 16; ++i) offs[i] = offs[i - 1] + count[i - 1];
        symbols.assign(n, 0);
        for (int i = 0; i < n; ++i)
            if (lengths[i]) symbols[offs[lengths[i]]++] = static_cast<uint16_t>(i);
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len < 16; ++len) {
            code |= static_cast<int>(br.bits(1));
            int cnt = count[len];
            if (code - first < cnt) return symbols[index + code - first];
            index += cnt;
            first = (first + cnt) << 1;
            code <<= 1;
        }
        throw std::runtime_error("png: invalid huffman code");
    }
};

std::vector<uint8_t> inflate(const uint8_t* data, size_t size) {
    static const int len_base[] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
                                   31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
    static const int len_extra[] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                    2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
    static const int dist_base[] = {1,    2,    3,    4,    5,    7,     9,     13,    17,  25,
                                    33,   49,   65,   97,   129,  193,   257,   385,   513, 769,
                                    1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
    static const int dist_extra[] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                     6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

    if (size < 2) throw std::runtime_error("png: bad zlib stream");
    BitReader br{data, size};
    br.bits(16);  // zlib header (method/flags); checksum is verified via adler at the end
    std::vector<uint8_t> out;

    bool final_block = false;
    while (!final_block) {
        final_block = br.bits(1) != 0;
        uint32_t type = br.bits(2);
        if (type == 0) {
            br.align_byte();
            if (br.pos + 4 > br.size) throw std::runtime_error("png: truncated stored block");
            uint32_t len = uint32_t(br.data[br.pos]) | (uint32_t(br.data[br.pos + 1]) << 8);
            br.pos += 4;  // len + ~len
            if (br.pos + len > br.size) throw std::runtime_error("png: truncated stored block");
            out.insert(out.end(), br.data + br.pos, br.data + br.pos + len);
            br.pos += len;
        } else if (type == 1 || type == 2) {
            Huffman lit, dist;
            if (type == 1) {
                uint8_t lens[288];
                for (int i = 0; i < 144; ++i) lens[i] = 8;
                for (int i = 144; i < 256; ++i) lens[i] = 9;
                for (int i = 256; i < 280; ++i) lens[i] = 7;
                for (int i = 280; i < 288; ++i) lens[i] = 8;
                lit.build(lens, 288);
                uint8_t dlens[30];
                for (auto& d : dlens) d = 5;
                dist.build(dlens, 30);
            } else {
                int hlit = static_cast<int>(br.bits(5)) + 257;
                int hdist = static_cast<int>(br.bits(5)) + 1;
                int hclen = static_cast<int>(br.bits(4)) + 4;
                static const int ord[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                            11, 4,  12, 3, 13, 2, 14, 1, 15};
                uint8_t clens[19] = {};
                for (int i = 0; i < hclen; ++i) clens[ord[i]] = static_cast<uint8_t>(br.bits(3));
                Huffman cl;
                cl.build(clens, 19);
                std::vector<uint8_t> lens(static_cast<size_t>(hlit + hdist), 0);
                for (int i = 0; i < hlit + hdist;) {
                    int sym = cl.decode(br);
                    if (sym < 16) {
                        lens[i++] = static_cast<uint8_t>(sym);
                    } else if (sym == 16) {
                        if (i == 0) throw std::runtime_error("png: bad code lengths");
                        int rep = 3 + static_cast<int>(br.bits(2));
                        uint8_t prev = lens[i - 1];
                        while (rep-- && i < hlit + hdist) lens[i++] = prev;
                    } else if (sym == 17) {
                        int rep = 3 + static_cast<int>(br.bits(3));
                        while (rep-- && i < hlit + hdist) lens[i++] = 0;
                    } else {
                        int rep = 11 + static_cast<int>(br.bits(7));
                        while (rep-- && i < hlit + hdist) lens[i++] = 0;
                    }
                }
                lit.build(lens.data(), hlit);
                dist.build(lens.data() + hlit, hdist);
            }
            for (;;) {
                int sym = lit.decode(br);
                if (sym < 256) {
                    out.push_back(static_cast<uint8_t>(sym));
                } else if (sym == 256) {
                    break;
                } else {
                    sym -= 257;
                    if (sym >= 29) throw std::runtime_error("png: bad length symbol");
                    int len = len_base[sym] + static_cast<int>(br.bits(len_extra[sym]));
                    int dsym = dist.decode(br);
                    if (dsym >= 30) throw std::runtime_error("png: bad distance symbol");
                    int d = dist_base[dsym] + static_cast<int>(br.bits(dist_extra[dsym]));
                    if (d > static_cast<int>(out.size())) throw std::runtime_error("png: bad distance");
                    size_t from = out.size() - static_cast<size_t>(d);
                    for (int i = 0; i < len; ++i) out.push_back(out[from + static_cast<size_t>(i)]);
                }
            }
        } else {
            throw std::runtime_error("png: reserved block type");
        }
    }
    return out;
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
    if (pb <= pc) return static_cast<uint8_t>(b);
    return static_cast<uint8_t>(c);
}

}  // namespace

Raster read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw std::runtime_error("png: bad signature in " + path);

    Raster r;
    int bit_depth = 0, color_type = -1;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        uint32_t len = read_u32(bytes.data() + pos);
        std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
        if (pos + 12 + len > bytes.size()) throw std::runtime_error("png: truncated chunk");
        const uint8_t* body = bytes.data() + pos + 8;
        if (type == "IHDR") {
            r.width = static_cast<int>(read_u32(body));
            r.height = static_cast<int>(read_u32(body + 4));
            bit_depth = body[8];
            color_type = body[9];
            if (body[12] != 0) throw std::runtime_error("png: interlaced images unsupported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), body, body + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (bit_depth != 8) throw std::runtime_error("png: only 8-bit depth supported: " + path);
    if (color_type == 0)
        r.channels = 1;
    else if (color_type == 2)
        r.channels = 3;
    else
        throw std::runtime_error("png: unsupported color type in " + path);

    std::vector<uint8_t> raw = inflate(idat.data(), idat.size());
    size_t stride = static_cast<size_t>(r.width) * r.channels;
    if (raw.size() < (stride + 1) * static_cast<size_t>(r.height))
        throw std::runtime_error("png: scanline data too short in " + path);

    r.pixels.assign(stride * static_cast<size_t>(r.height), 0);
    int bpp = r.channels;
    for (int y = 0; y < r.height; ++y) {
        uint8_t filter = raw[(stride + 1) * static_cast<size_t>(y)];
        const uint8_t* src = raw.data() + (stride + 1) * static_cast<size_t>(y) + 1;
        uint8_t* dst = r.pixels.data() + stride * static_cast<size_t>(y);
        const uint8_t* up = y > 0 ? r.pixels.data() + stride * static_cast<size_t>(y - 1) : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("png: bad filter type");
            }
            dst[x] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return r;
}

void write_png(const std::string& path, const Raster& raster) {
    if (raster.channels != 1 && raster.channels != 3)
        throw std::runtime_error("png: writer supports 1 or 3 channels");
    size_t stride = static_cast<size_t>(raster.width) * raster.channels;
    if (raster.pixels.size() != stride * static_cast<size_t>(raster.height))
        throw std::runtime_error("png: pixel buffer size mismatch");

    // Raw stream: filter byte 0 + scanline, per row.
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<size_t>(raster.height));
    for (int y = 0; y < raster.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = raster.pixels.data() + stride * static_cast<size_t>(y);
        raw.insert(raw.end(), row, row + stride);
    }

    // zlib wrapper with stored deflate blocks.
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size() || raw.empty()) {
        size_t n = std::min<size_t>(65535, raw.size() - off);
        bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xff));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xff));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
        off += n;
        if (last) break;
    }
    put_u32(z, adler32(raw.data(), raw.size()));

    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> out(sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(raster.width));
    put_u32(ihdr, static_cast<uint32_t>(raster.height));
    ihdr.push_back(8);
    ihdr.push_back(raster.channels == 3 ? 2 : 0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("png: cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("png: short write to " + path);
}

}  // namespace jeca::png
