#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace flowattr {

enum class StyleFamily { single_color, multi_color, default_, black_white };

inline std::string_view to_string(StyleFamily f) {
    switch (f) {
        case StyleFamily::single_color: return "single_color";
        case StyleFamily::multi_color: return "multi_color";
        case StyleFamily::default_: return "default";
        case StyleFamily::black_white: return "black_white";
    }
    return "default";
}

inline std::optional<StyleFamily> style_family_from_string(std::string_view s) {
    for (auto f : {StyleFamily::single_color, StyleFamily::multi_color, StyleFamily::default_,
                   StyleFamily::black_white}) {
        if (to_string(f) == s) return f;
    }
    return std::nullopt;
}

namespace styles {

/// Bumped whenever a table entry changes; recorded in generated SVGs.
inline constexpr int kTableVersion = 1;

struct Palette {
    std::array<std::string_view, 5> colors;
    std::size_t size;
};

// Light fills chosen to keep black statement text and red overlay labels readable.
inline constexpr std::array<std::string_view, 40> kSingleColors = {
    "#EFB3B3", "#F4D2CD", "#EFC5B3", "#F4DECD", "#EFD7B3",
    "#F4EACD", "#EFE9B3", "#F2F4CD", "#E3EFB3", "#E6F4CD",
    "#D1EFB3", "#DAF4CD", "#BFEFB3", "#CEF4CD", "#B3EFB9",
    "#CDF4D6", "#B3EFCB", "#CDF4E2", "#B3EFDD", "#CDF4EE",
    "#B3EFEF", "#CDEEF4", "#B3DDEF", "#CDE2F4", "#B3CBEF",
    "#CDD6F4", "#B3B9EF", "#CECDF4", "#BFB3EF", "#DACDF4",
    "#D1B3EF", "#E6CDF4", "#E3B3EF", "#F2CDF4", "#EFB3E9",
    "#F4CDEA", "#EFB3D7", "#F4CDDE", "#EFB3C5", "#F4CDD2",
};

inline constexpr std::array<Palette, 35> kPalettes = {{
    {{"#EBADAD", "#F1D7C6", "#F5EFD6", "#BEEFEF", "#CEE4F3"}, 5},
    {{"#EBB8AD", "#C6F1CD", "#DBD6F5", "#E6EFBE", "#F3CEEC"}, 5},
    {{"#EBC2AD", "#F1E6C6", "#F0F5D6", "#BEDEEF"}, 4},
    {{"#EBCDAD", "#C6F1DC", "#E6D6F5", "#D6EFBE", "#F3CEE0"}, 5},
    {{"#EBD7AD", "#EDF1C6", "#E6F5D6", "#BECDEF", "#D1CEF3"}, 5},
    {{"#EBE2AD", "#C6F1EB", "#F0D6F5", "#C5EFBE"}, 4},
    {{"#E9EBAD", "#DEF1C6", "#DBF5D6", "#BFBEEF", "#DECEF3"}, 5},
    {{"#DEEBAD", "#C6E8F1", "#F5D6EF", "#BEEFC8", "#F3D5CE"}, 5},
    {{"#D4EBAD", "#D0F1C6", "#D6F5DB", "#D0BEEF"}, 4},
    {{"#C9EBAD", "#C6D9F1", "#F5D6E4", "#BEEFD8", "#F3E2CE"}, 5},
    {{"#BFEBAD", "#C6F1CB", "#D6F5E6", "#E1BEEF", "#F3CEEF"}, 5},
    {{"#B4EBAD", "#C6CBF1", "#F5D6DA", "#BEEFE9"}, 4},
    {{"#ADEBB1", "#C6F1D9", "#D6F5F0", "#EFBEEC", "#F3CEE2"}, 5},
    {{"#ADEBBB", "#D0C6F1", "#F5DDD6", "#BEE3EF", "#EAF3CE"}, 5},
    {{"#ADEBC6", "#C6F1E8", "#D6EFF5", "#EFBEDB"}, 4},
    {{"#ADEBD0", "#DEC6F1", "#F5E8D6", "#BED3EF", "#DEF3CE"}, 5},
    {{"#ADEBDB", "#C6EBF1", "#D6E4F5", "#EFBECA", "#F3D3CE"}, 5},
    {{"#ADEBE5", "#EDC6F1", "#F5F2D6", "#BEC2EF"}, 4},
    {{"#ADE5EB", "#C6DCF1", "#D6DAF5", "#EFC2BE", "#F3E0CE"}, 5},
    {{"#ADDBEB", "#F1C6E6", "#EDF5D6", "#CABEEF", "#CEF3D7"}, 5},
    {{"#ADD0EB", "#C6CDF1", "#DDD6F5", "#EFD3BE"}, 4},
    {{"#ADC6EB", "#F1C6D7", "#E2F5D6", "#DBBEEF", "#CEF3E4"}, 5},
    {{"#ADBBEB", "#CDC6F1", "#E8D6F5", "#EFE3BE", "#ECF3CE"}, 5},
    {{"#ADB1EB", "#F1C6C8", "#D8F5D6", "#ECBEEF"}, 4},
    {{"#B4ADEB", "#DCC6F1", "#F2D6F5", "#E9EFBE", "#E0F3CE"}, 5},
    {{"#BFADEB", "#F1D2C6", "#D6F5DF", "#EFBEE1", "#CEE8F3"}, 5},
    {{"#C9ADEB", "#EBC6F1", "#F5D6ED", "#D8EFBE"}, 4},
    {{"#D4ADEB", "#F1E1C6", "#D6F5E9", "#EFBED0", "#CEDCF3"}, 5},
    {{"#DEADEB", "#F1C6E8", "#F5D6E2", "#C8EFBE", "#CEF3D5"}, 5},
    {{"#E9ADEB", "#F1EFC6", "#D6F5F4", "#EFBEBF"}, 4},
    {{"#EBADE2", "#F1C6D9", "#F5D6D8", "#BEEFC5", "#CEF3E2"}, 5},
    {{"#EBADD7", "#E3F1C6", "#D6EBF5", "#EFCDBE", "#DACEF3"}, 5},
    {{"#EBADCD", "#F1C6CB", "#F5DFD6", "#BEEFD6"}, 4},
    {{"#EBADC2", "#D5F1C6", "#D6E1F5", "#EFDEBE", "#E6CEF3"}, 5},
    {{"#EBADB8", "#F1D0C6", "#F5E9D6", "#BEEFE6", "#CEEAF3"}, 5},
}};

inline constexpr std::string_view kDefaultFill = "#ECECFF";
inline constexpr std::string_view kDefaultStroke = "#9370DB";
inline constexpr std::string_view kColorStroke = "#333333";

}  // namespace styles

struct StyleSpec {
    StyleFamily family = StyleFamily::default_;
    std::vector<std::string> colors;  // node fills
    std::string stroke;
    std::uint64_t seed = 0;

    /// Fill for the i-th node in insertion order.
    const std::string& fill_for(std::size_t i) const { return colors[i % colors.size()]; }

    bool operator==(const StyleSpec&) const = default;
};

inline StyleSpec make_style(StyleFamily family, std::uint64_t seed) {
    StyleSpec s;
    s.family = family;
    s.seed = seed;
    std::mt19937_64 rng(seed);
    switch (family) {
        case StyleFamily::single_color:
            s.colors = {std::string(styles::kSingleColors[rng() % styles::kSingleColors.size()])};
            s.stroke = styles::kColorStroke;
            break;
        case StyleFamily::multi_color: {
            const auto& p = styles::kPalettes[rng() % styles::kPalettes.size()];
            for (std::size_t i = 0; i < p.size; ++i) s.colors.emplace_back(p.colors[i]);
            s.stroke = styles::kColorStroke;
            break;
        }
        case StyleFamily::default_:
            s.colors = {std::string(styles::kDefaultFill)};
            s.stroke = styles::kDefaultStroke;
            break;
        case StyleFamily::black_white:
            s.colors = {"#FFFFFF"};
            s.stroke = "#000000";
            break;
    }
    return s;
}

}  // namespace flowattr
