//! Interpolation tables for the fixed-point `ln` and `exp`.

/// `ln 2` with 32 fractional bits.
pub(crate) const LN2_Q32: i64 = 2977044472;
/// `log2 e` with 32 fractional bits.
pub(crate) const LOG2E_Q32: i64 = 6196328019;

/// `ln(1 + j/64)` for `j = 0..=64`, 32 fractional bits.
pub(crate) const LN_1P_Q32: [i64; 65] = [
    0, 66589974, 132163268, 196750459, 260380768, 323082134, 384881291, 445803834, 505874286, 565116154, 623551984,
    681203418, 738091233, 794235396, 849655098, 904368797, 958394255, 1011748572, 1064448219, 1116509066, 1167946415,
    1218775023, 1269009132, 1318662486, 1367748360, 1416279581, 1464268541, 1511727226, 1558667227, 1605099758,
    1651035675, 1696485489, 1741459379, 1785967210, 1830018543, 1873622647, 1916788510, 1959524856, 2001840147,
    2043742599, 2085240191, 2126340670, 2167051565, 2207380193, 2247333665, 2286918897, 2326142616, 2365011363,
    2403531508, 2441709246, 2479550612, 2517061482, 2554247578, 2591114477, 2627667611, 2663912276, 2699853634,
    2735496721, 2770846446, 2805907598, 2840684851, 2875182766, 2909405794, 2943358281, 2977044472,
];

/// `2^(-j/64)` for `j = 0..=64`, 32 fractional bits.
pub(crate) const EXP2_NEG_Q32: [u64; 65] = [
    4294967296, 4248701965, 4202935003, 4157661043, 4112874773, 4068570940, 4024744348, 3981389855, 3938502376,
    3896076880, 3854108391, 3812591987, 3771522796, 3730896002, 3690706840, 3650950594, 3611622603, 3572718252,
    3534232978, 3496162267, 3458501653, 3421246719, 3384393094, 3347936457, 3311872529, 3276197082, 3240905930,
    3205994934, 3171459999, 3137297074, 3103502151, 3070071267, 3037000500, 3004285971, 2971923842, 2939910317,
    2908241642, 2876914102, 2845924021, 2815267765, 2784941738, 2754942382, 2725266179, 2695909648, 2666869345,
    2638141863, 2609723834, 2581611923, 2553802834, 2526293303, 2499080105, 2472160047, 2445529972, 2419186755,
    2393127307, 2367348571, 2341847524, 2316621173, 2291666561, 2266980759, 2242560872, 2218404036, 2194507417,
    2170868212, 2147483648,
];
