#include "lienet/network.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace lienet {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

std::string_view to_string(TieMode m) {
    return m == TieMode::mirror_tied ? "mirror_tied" : "untied";
}

std::string_view to_string(SkipMode m) {
    return m == SkipMode::literal ? "literal" : "single";
}

TieMode parse_tie_mode(std::string_view s) {
    if (s == "mirror_tied") return TieMode::mirror_tied;
    if (s == "untied") return TieMode::untied;
    throw StructuralError("unknown tie mode '" + std::string(s) + "' (mirror_tied|untied)");
}

SkipMode parse_skip_mode(std::string_view s) {
    if (s == "literal") return SkipMode::literal;
    if (s == "single") return SkipMode::single;
    throw StructuralError("unknown skip mode '" + std::string(s) + "' (literal|single)");
}

std::vector<int> parse_dia_set(std::string_view text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = text.find_first_of("+,", pos);
        const std::string_view tok =
            text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
            throw StructuralError("invalid dilation set '" + std::string(text) + "'");
        }
        out.push_back(value);
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return out;
}

std::string format_dia_set(std::span<const int> dias) {
    std::string s;
    for (std::size_t i = 0; i < dias.size(); ++i) {
        if (i) s += '+';
        s += std::to_string(dias[i]);
    }
    return s;
}

void NetworkConfig::validate() const {
    if (dia_set.empty()) throw StructuralError("dia_set must not be empty");
    for (std::size_t i = 0; i < dia_set.size(); ++i) {
        if (dia_set[i] < 0) throw StructuralError("dia_set: dilation rates must be >= 0");
        if (i > 0 && dia_set[i] <= dia_set[i - 1]) {
            throw StructuralError("dia_set must be strictly increasing without duplicates, got " +
                                  format_dia_set(dia_set));
        }
    }
    if (stages < 1) throw StructuralError("stages must be >= 1");
    if (channels != 3) throw StructuralError("channels must be 3");
}

int NetworkConfig::parameter_sets() const {
    return tie_mode == TieMode::mirror_tied ? stages : 2 * stages + 1;
}

Variant home_variant(const NetworkConfig& config, std::size_t set_index) {
    if (config.tie_mode == TieMode::untied) {
        const auto L = static_cast<std::size_t>(config.stages);
        if (set_index == L) return Variant::plain;
        if (set_index > L) return Variant::up;
    }
    return Variant::down;
}

// ---- MSRB --------------------------------------------------------------------

template <typename T>
std::size_t MsrbParams<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& k : kernels) n += k.scalar_count();
    return n;
}

template <typename T>
MsrbParams<T> MsrbParams<T>::zeros_like() const {
    MsrbParams z;
    z.variant = variant;
    for (const auto& k : kernels) z.kernels.push_back(k.zeros_like());
    return z;
}

template <typename T>
MsrbParams<T>& MsrbParams<T>::operator+=(const MsrbParams& other) {
    if (other.kernels.size() != kernels.size()) throw StructuralError("MsrbParams +=: layout mismatch");
    for (std::size_t i = 0; i < kernels.size(); ++i) kernels[i] += other.kernels[i];
    return *this;
}

template <typename T>
MsrbParams<T> init_msrb(int channels, std::span<const int> dia_set, Variant variant,
                        std::uint64_t seed) {
    MsrbParams<T> p;
    p.variant = variant;
    for (std::size_t i = 0; i < dia_set.size(); ++i) {
        p.kernels.push_back(init_params<T>(channels, dia_set[i], variant, mix_seed(seed, i)));
    }
    return p;
}

template <typename T>
Tensor<T> msrb_forward(const Tensor<T>& x, const MsrbParams<T>& p, Variant variant,
                       SkipMode skip_mode, const Tensor<T>* skip, MsrbCache<T>* cache) {
    if (p.kernels.empty()) throw StructuralError("msrb_forward: block has no kernels");
    if (variant == Variant::up && skip == nullptr) {
        throw StructuralError("msrb_forward: up block requires a skip tensor");
    }
    if (variant != Variant::up && skip != nullptr) {
        throw StructuralError("msrb_forward: skip tensor given to a non-up block");
    }
    std::optional<SpatialSize> target;
    if (skip) {
        if (skip->batch() != x.batch() || skip->channels() != x.channels()) {
            throw StructuralError("msrb_forward: skip " + skip->shape().str() +
                                  " incompatible with input " + x.shape().str());
        }
        target = SpatialSize{skip->height(), skip->width()};
    }
    if (cache) {
        cache->variant = variant;
        cache->input_shape = x.shape();
        cache->skip_shape = skip ? std::optional<Shape>(skip->shape()) : std::nullopt;
        cache->kernels.assign(p.kernels.size(), DSConvCache<T>{});
    }

    std::optional<Tensor<T>> sum;
    for (std::size_t k = 0; k < p.kernels.size(); ++k) {
        Tensor<T> y = dsconv_forward(x, p.kernels[k], variant, target,
                                     cache ? &cache->kernels[k] : nullptr);
        // Literal composition: the skip enters every subpath.
        if (skip && skip_mode == SkipMode::literal) y += *skip;
        if (sum) {
            *sum += y;
        } else {
            sum = std::move(y);
        }
    }
    if (skip && skip_mode == SkipMode::single) *sum += *skip;
    return std::move(*sum);
}

template <typename T>
MsrbGrad<T> msrb_backward(const MsrbCache<T>& cache, const MsrbParams<T>& p, SkipMode skip_mode,
                          const Tensor<T>& dy) {
    if (cache.kernels.size() != p.kernels.size()) {
        throw StructuralError("msrb_backward: cache holds " + std::to_string(cache.kernels.size()) +
                              " kernels, params " + std::to_string(p.kernels.size()));
    }
    MsrbGrad<T> g{Tensor<T>(cache.input_shape), p.zeros_like(), std::nullopt};
    for (std::size_t k = 0; k < p.kernels.size(); ++k) {
        DSConvGrad<T> kg = dsconv_backward(cache.kernels[k], p.kernels[k], dy);
        g.dx += kg.dx;
        g.dp.kernels[k] = std::move(kg.dp);
    }
    if (cache.skip_shape) {
        require_same_shape(dy.shape(), *cache.skip_shape, "msrb_backward skip");
        Tensor<T> ds = dy;
        if (skip_mode == SkipMode::literal) ds *= static_cast<T>(p.kernels.size());
        g.dskip = std::move(ds);
    }
    return g;
}

// ---- Network -------------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkConfig config, std::vector<MsrbParams<T>> stage_params)
    : config_(std::move(config)), stages_(std::move(stage_params)) {
    config_.validate();
    if (static_cast<int>(stages_.size()) != config_.parameter_sets()) {
        throw StructuralError("network expects " + std::to_string(config_.parameter_sets()) +
                              " parameter sets, got " + std::to_string(stages_.size()));
    }
    for (const auto& s : stages_) {
        if (s.kernels.size() != config_.dia_set.size()) {
            throw StructuralError("parameter set kernel count does not match dia_set");
        }
        for (std::size_t k = 0; k < s.kernels.size(); ++k) {
            const auto& kp = s.kernels[k];
            if (kp.dia != config_.dia_set[k]) {
                throw StructuralError("kernel dilation does not match dia_set");
            }
            const auto c = static_cast<std::size_t>(config_.channels);
            if (kp.w1.size() != c || kp.b1.size() != c || kp.w2.size() != c || kp.b2.size() != c) {
                throw StructuralError("kernel parameter vectors must have channel length");
            }
        }
    }
}

template <typename T>
Network<T> Network<T>::initialize(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<MsrbParams<T>> sets;
    const int n = config.parameter_sets();
    for (int s = 0; s < n; ++s) {
        const Variant v = home_variant(config, static_cast<std::size_t>(s));
        sets.push_back(init_msrb<T>(config.channels, config.dia_set, v, mix_seed(seed, 1000 + s)));
    }
    return Network(config, std::move(sets));
}

template <typename T>
std::size_t Network<T>::param_index(SiteKind kind, int level) const {
    const int L = config_.stages;
    if (kind != SiteKind::bottleneck && (level < 1 || level > L)) {
        throw StructuralError("site level out of range: " + std::to_string(level));
    }
    if (config_.tie_mode == TieMode::mirror_tied) {
        return static_cast<std::size_t>(kind == SiteKind::bottleneck ? L - 1 : level - 1);
    }
    switch (kind) {
    case SiteKind::encoder: return static_cast<std::size_t>(level - 1);
    case SiteKind::bottleneck: return static_cast<std::size_t>(L);
    case SiteKind::decoder: return static_cast<std::size_t>(L + level);
    }
    return 0;
}

template <typename T>
std::size_t Network<T>::param_count() const {
    std::size_t n = 0;
    for (const auto& s : stages_) n += s.scalar_count();
    return n;
}

namespace {

template <typename T>
void flatten_into(const std::vector<MsrbParams<T>>& sets, std::vector<T>& out) {
    for (const auto& s : sets)
        for (const auto& k : s.kernels) {
            out.insert(out.end(), k.w1.begin(), k.w1.end());
            out.insert(out.end(), k.b1.begin(), k.b1.end());
            out.insert(out.end(), k.w2.begin(), k.w2.end());
            out.insert(out.end(), k.b2.begin(), k.b2.end());
        }
}

} // namespace

template <typename T>
std::vector<T> Network<T>::flatten() const {
    std::vector<T> out;
    out.reserve(param_count());
    flatten_into(stages_, out);
    return out;
}

template <typename T>
void Network<T>::assign(std::span<const T> flat) {
    if (flat.size() != param_count()) {
        throw StructuralError("Network::assign: expected " + std::to_string(param_count()) +
                              " scalars, got " + std::to_string(flat.size()));
    }
    std::size_t pos = 0;
    auto take = [&](std::vector<T>& v) {
        std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
        pos += v.size();
    };
    for (auto& s : stages_)
        for (auto& k : s.kernels) {
            take(k.w1);
            take(k.b1);
            take(k.w2);
            take(k.b2);
        }
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    std::vector<MsrbParams<U>> sets;
    for (const auto& s : stages_) {
        MsrbParams<U> ms;
        ms.variant = s.variant;
        for (const auto& k : s.kernels) {
            DSConvParams<U> d;
            d.dia = k.dia;
            d.variant = k.variant;
            d.w1.assign(k.w1.begin(), k.w1.end());
            d.b1.assign(k.b1.begin(), k.b1.end());
            d.w2.assign(k.w2.begin(), k.w2.end());
            d.b2.assign(k.b2.begin(), k.b2.end());
            ms.kernels.push_back(std::move(d));
        }
        sets.push_back(std::move(ms));
    }
    return Network<U>(config_, std::move(sets));
}

template <typename T>
std::vector<T> NetworkGrad<T>::flatten() const {
    std::vector<T> out;
    flatten_into(stages, out);
    return out;
}

std::size_t net_param_count(const NetworkConfig& config) {
    config.validate();
    return static_cast<std::size_t>(config.parameter_sets()) * config.dia_set.size() *
           static_cast<std::size_t>(dsconv_param_count(config.channels));
}

template <typename T>
std::vector<Tensor<T>> net_forward(const Tensor<T>& x, const Network<T>& net,
                                   NetworkCache<T>* cache) {
    const NetworkConfig& cfg = net.config();
    const int L = cfg.stages;
    const int min_side = 1 << L;
    if (x.channels() != cfg.channels) {
        throw StructuralError("net_forward: expected " + std::to_string(cfg.channels) +
                              " channels, got " + x.shape().str());
    }
    if (x.height() < min_side || x.width() < min_side) {
        throw StructuralError("net_forward: input " + x.shape().str() + " smaller than " +
                              std::to_string(min_side) + "x" + std::to_string(min_side));
    }
    if (cache) {
        cache->input_shape = x.shape();
        cache->encoder_shapes.clear();
        cache->encoder.assign(L, MsrbCache<T>{});
        cache->decoder.assign(L, MsrbCache<T>{});
    }

    // Encoder: S_0 = x, S_l = M_down(S_{l-1}).
    std::vector<Tensor<T>> skips;
    skips.reserve(L + 1);
    skips.push_back(x);
    for (int l = 1; l <= L; ++l) {
        skips.push_back(msrb_forward(skips.back(), net.site_params(SiteKind::encoder, l),
                                     Variant::down, cfg.skip_mode, static_cast<const Tensor<T>*>(nullptr),
                                     cache ? &cache->encoder[l - 1] : nullptr));
    }
    if (cache) {
        for (const auto& s : skips) cache->encoder_shapes.push_back(s.shape());
    }

    Tensor<T> current = msrb_forward(skips[L], net.site_params(SiteKind::bottleneck, 0),
                                     Variant::plain, cfg.skip_mode,
                                     static_cast<const Tensor<T>*>(nullptr),
                                     cache ? &cache->bottleneck : nullptr);

    // Decoder, coarse to fine: O_l = M_up(O_{l+1}, S_{l-1}) + S_{l-1}.
    std::vector<Tensor<T>> outputs(L);
    for (int l = L; l >= 1; --l) {
        const Tensor<T>& skip = skips[l - 1];
        Tensor<T> o = msrb_forward(current, net.site_params(SiteKind::decoder, l), Variant::up,
                                   cfg.skip_mode, &skip, cache ? &cache->decoder[l - 1] : nullptr);
        o += skip;
        outputs[l - 1] = o;
        current = std::move(o);
    }
    return outputs;
}

template <typename T>
NetworkGrad<T> net_backward(const Network<T>& net, const NetworkCache<T>& cache,
                            std::span<const Tensor<T>> d_outputs) {
    const NetworkConfig& cfg = net.config();
    const int L = cfg.stages;
    if (static_cast<int>(d_outputs.size()) != L) {
        throw StructuralError("net_backward: expected " + std::to_string(L) +
                              " output gradients, got " + std::to_string(d_outputs.size()));
    }
    if (static_cast<int>(cache.encoder_shapes.size()) != L + 1) {
        throw StructuralError("net_backward: cache was not filled by net_forward");
    }
    for (int l = 1; l <= L; ++l) {
        require_same_shape(d_outputs[l - 1].shape(), cache.encoder_shapes[l - 1],
                           "net_backward output gradient");
    }

    NetworkGrad<T> g;
    for (const auto& s : net.stage_params()) g.stages.push_back(s.zeros_like());

    std::vector<GradPair<T>> d_skips;
    for (const auto& s : cache.encoder_shapes) d_skips.emplace_back(Tensor<T>(s));

    // Decoder, fine to coarse. d_current is the gradient reaching O_l.
    Tensor<T> d_current = d_outputs[0];
    for (int l = 1; l <= L; ++l) {
        const std::size_t idx = net.param_index(SiteKind::decoder, l);
        MsrbGrad<T> mg = msrb_backward(cache.decoder[l - 1], net.stage_params()[idx],
                                       cfg.skip_mode, d_current);
        g.stages[idx] += mg.dp;
        d_skips[l - 1].accumulate(d_current);  // outer skip addition
        d_skips[l - 1].accumulate(*mg.dskip);
        if (l < L) {
            d_current = d_outputs[l];
            d_current += mg.dx;
        } else {
            d_current = std::move(mg.dx);  // reaches the bottleneck output
        }
    }

    {
        const std::size_t idx = net.param_index(SiteKind::bottleneck, 0);
        MsrbGrad<T> mg = msrb_backward(cache.bottleneck, net.stage_params()[idx], cfg.skip_mode,
                                       d_current);
        g.stages[idx] += mg.dp;
        d_skips[L].accumulate(mg.dx);
    }

    for (int l = L; l >= 1; --l) {
        const std::size_t idx = net.param_index(SiteKind::encoder, l);
        MsrbGrad<T> mg = msrb_backward(cache.encoder[l - 1], net.stage_params()[idx],
                                       cfg.skip_mode, d_skips[l].grad_or_zero());
        g.stages[idx] += mg.dp;
        d_skips[l - 1].accumulate(mg.dx);
    }
    g.dx = d_skips[0].grad_or_zero();
    return g;
}

// ---- FLOP report ------------------------------------------------------------------

FlopReport net_flop_report(const NetworkConfig& config, int height, int width) {
    config.validate();
    const int L = config.stages;
    const int min_side = 1 << L;
    if (height < min_side || width < min_side) {
        throw StructuralError("net_flop_report: input smaller than " + std::to_string(min_side) +
                              "x" + std::to_string(min_side));
    }
    const std::int64_t C = config.channels;
    const std::int64_t kappa = config.kappa();
    FlopReport r;

    auto kernel_lines = [&](const std::string& site, int h, int w) {
        for (int dia : config.dia_set) {
            r.lines.push_back({site, "dsconv", dia, h, w, dsconv_flop_count(C, h, w).total});
        }
    };
    auto aux = [&](const std::string& site, const std::string& item, int h, int w,
                   std::int64_t per_element) {
        r.lines.push_back({site, item, -1, h, w, per_element * C * h * w});
    };

    std::vector<std::pair<int, int>> sizes{{height, width}};
    for (int l = 1; l <= L; ++l) {
        const auto [h, w] = sizes.back();
        const std::string site = "encoder" + std::to_string(l);
        kernel_lines(site, h, w);
        const int oh = h / 2;
        const int ow = w / 2;
        aux(site, "avg_pool", oh, ow, 4 * kappa);
        aux(site, "subpath_sum", oh, ow, kappa - 1);
        sizes.emplace_back(oh, ow);
    }
    {
        const auto [h, w] = sizes.back();
        kernel_lines("bottleneck", h, w);
        aux("bottleneck", "subpath_sum", h, w, kappa - 1);
    }
    for (int l = L; l >= 1; --l) {
        const auto [h, w] = sizes[l - 1];
        const std::string site = "decoder" + std::to_string(l);
        aux(site, "bilinear", h, w, 7 * kappa);
        kernel_lines(site, h, w);
        aux(site, "subpath_sum", h, w, kappa - 1);
        const std::int64_t skip_adds = config.skip_mode == SkipMode::literal ? kappa + 1 : 2;
        aux(site, "skip_add", h, w, skip_adds);
    }
    for (const auto& line : r.lines) {
        if (line.item == "dsconv") {
            r.kernel_total += line.flops;
        } else {
            r.auxiliary_total += line.flops;
        }
    }
    r.grand_total = r.kernel_total + r.auxiliary_total;
    return r;
}

std::string FlopReport::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(12) << "site" << std::setw(13) << "item" << std::setw(5) << "dia"
       << std::setw(11) << "size" << std::right << std::setw(14) << "flops" << '\n';
    for (const auto& l : lines) {
        os << std::left << std::setw(12) << l.site << std::setw(13) << l.item << std::setw(5)
           << (l.dia >= 0 ? std::to_string(l.dia) : std::string("-")) << std::setw(11)
           << (std::to_string(l.height) + "x" + std::to_string(l.width)) << std::right
           << std::setw(14) << l.flops << '\n';
    }
    os << "kernel_total: " << kernel_total << '\n';
    os << "auxiliary_total: " << auxiliary_total << '\n';
    os << "grand_total: " << grand_total << '\n';
    return os.str();
}

std::string FlopReport::to_json() const {
    nlohmann::json j;
    j["lines"] = nlohmann::json::array();
    for (const auto& l : lines) {
        nlohmann::json e{{"site", l.site}, {"item", l.item}, {"height", l.height},
                         {"width", l.width}, {"flops", l.flops}};
        if (l.dia >= 0) e["dia"] = l.dia;
        j["lines"].push_back(std::move(e));
    }
    j["kernel_total"] = kernel_total;
    j["auxiliary_total"] = auxiliary_total;
    j["grand_total"] = grand_total;
    return j.dump();
}

#define LIENET_INSTANTIATE_NETWORK(T)                                                              \
    template struct MsrbParams<T>;                                                                 \
    template MsrbParams<T> init_msrb(int, std::span<const int>, Variant, std::uint64_t);           \
    template Tensor<T> msrb_forward(const Tensor<T>&, const MsrbParams<T>&, Variant, SkipMode,     \
                                    const Tensor<T>*, MsrbCache<T>*);                              \
    template MsrbGrad<T> msrb_backward(const MsrbCache<T>&, const MsrbParams<T>&, SkipMode,        \
                                       const Tensor<T>&);                                          \
    template class Network<T>;                                                                     \
    template struct NetworkGrad<T>;                                                                \
    template std::vector<Tensor<T>> net_forward(const Tensor<T>&, const Network<T>&,               \
                                                NetworkCache<T>*);                                 \
    template NetworkGrad<T> net_backward(const Network<T>&, const NetworkCache<T>&,                \
                                         std::span<const Tensor<T>>);

LIENET_INSTANTIATE_NETWORK(float)
LIENET_INSTANTIATE_NETWORK(double)

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

#undef LIENET_INSTANTIATE_NETWORK

} // namespace lienet
