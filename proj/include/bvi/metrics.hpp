#pragma once

#include <iomanip>
#include <optional>
#include <sstream>

#include "bvi/flow.hpp"
#include "bvi/image.hpp"

namespace bvi {

inline constexpr double kPsnrCap = 99.0;  // reported for zero MSE

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw invalid_input("psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        double d = a.px[i] - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.px.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// Mean local SSIM, Gaussian window 11 (sigma 1.5), K1=0.01, K2=0.03, peak 1;
// computed per channel over fully-interior windows and averaged.
inline double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw invalid_input("ssim: shape mismatch");
    constexpr int kWin = 11, kRad = 5;
    constexpr double kSigma = 1.5, kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    if (a.h < kWin || a.w < kWin) throw invalid_input("ssim: frame smaller than window");

    double k[kWin];
    double ksum = 0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - kRad;
        k[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
        ksum += k[i];
    }
    for (double& v : k) v /= ksum;

    const int h = a.h, w = a.w;
    auto smooth = [&](const std::vector<double>& src, std::vector<double>& dst) {
        std::vector<double> tmp(static_cast<size_t>(h) * w, 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = kRad; x < w - kRad; ++x) {
                double acc = 0;
                for (int i = 0; i < kWin; ++i)
                    acc += k[i] * src[static_cast<size_t>(y) * w + x - kRad + i];
                tmp[static_cast<size_t>(y) * w + x] = acc;
            }
        dst.assign(static_cast<size_t>(h) * w, 0.0);
        for (int y = kRad; y < h - kRad; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = 0; i < kWin; ++i)
                    acc += k[i] * tmp[static_cast<size_t>(y - kRad + i) * w + x];
                dst[static_cast<size_t>(y) * w + x] = acc;
            }
    };

    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> pa(static_cast<size_t>(h) * w), pb(pa.size()), paa(pa.size()),
            pbb(pa.size()), pab(pa.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                double va = a.at(y, x, c), vb = b.at(y, x, c);
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
        std::vector<double> ma, mb, maa, mbb, mab;
        smooth(pa, ma);
        smooth(pb, mb);
        smooth(paa, maa);
        smooth(pbb, mbb);
        smooth(pab, mab);
        double acc = 0;
        long n = 0;
        for (int y = kRad; y < h - kRad; ++y)
            for (int x = kRad; x < w - kRad; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                double mua = ma[i], mub = mb[i];
                double va = maa[i] - mua * mua;
                double vb = mbb[i] - mub * mub;
                double cov = mab[i] - mua * mub;
                acc += ((2 * mua * mub + kC1) * (2 * cov + kC2)) /
                       ((mua * mua + mub * mub + kC1) * (va + vb + kC2));
                ++n;
            }
        total += acc / static_cast<double>(n);
    }
    return total / a.channels;
}

// Second difference of flow between a test triple and a reference triple:
// D = (F_I1->I2 - F_I0->I1) - (F_R1->R2 - F_R0->R1).
inline FlowField differential_flow(const FlowField& fI12, const FlowField& fI01,
                                   const FlowField& fR12, const FlowField& fR01) {
    if (fI12.h != fI01.h || fI12.h != fR12.h || fI12.h != fR01.h || fI12.w != fI01.w ||
        fI12.w != fR12.w || fI12.w != fR01.w)
        throw invalid_input("differential_flow: field shape mismatch");
    FlowField d(fI12.h, fI12.w);
    for (size_t i = 0; i < d.uv.size(); ++i)
        d.uv[i] = (fI12.uv[i] - fI01.uv[i]) - (fR12.uv[i] - fR01.uv[i]);
    return d;
}

inline FlowField differential_flow(const Image& i0, const Image& i1, const Image& i2,
                                   const Image& r0, const Image& r1, const Image& r2,
                                   FlowSource& src_i, FlowSource& src_r, int base_index = 0) {
    if (!i0.same_shape(i1) || !i0.same_shape(i2) || !i0.same_shape(r0) || !i0.same_shape(r1) ||
        !i0.same_shape(r2))
        throw invalid_input("differential_flow: frame shape mismatch");
    FlowField fI12 = src_i.flow(i1, i2, base_index + 1, base_index + 2);
    FlowField fI01 = src_i.flow(i0, i1, base_index, base_index + 1);
    FlowField fR12 = src_r.flow(r1, r2, base_index + 1, base_index + 2);
    FlowField fR01 = src_r.flow(r0, r1, base_index, base_index + 1);
    return differential_flow(fI12, fI01, fR12, fR01);
}

// Histogram of differential-flow magnitudes over integer bins [s, s+1) for
// s = 0..s_max, plus an overflow bucket for norms >= s_max+1.
struct SmoothnessHistogram {
    int s_max = 10;
    std::vector<long long> bins;
    long long overflow = 0;
    long long total = 0;

    explicit SmoothnessHistogram(int s_max = 10)
        : s_max(s_max), bins(static_cast<size_t>(s_max) + 1, 0) {}

    void add(const FlowField& d) {
        if (!d.all_finite()) throw numeric_error("SmoothnessHistogram: non-finite flow");
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                double norm = std::hypot(d.u(y, x), d.v(y, x));
                int s = static_cast<int>(std::floor(norm));
                if (s <= s_max)
                    ++bins[static_cast<size_t>(s)];
                else
                    ++overflow;
                ++total;
            }
    }

    // log relative frequency; empty bins are undefined (null in reports)
    std::optional<double> m(int s) const {
        if (s < 0 || s > s_max) throw invalid_input("motion_smoothness: s out of range");
        if (total == 0 || bins[static_cast<size_t>(s)] == 0) return std::nullopt;
        return std::log(static_cast<double>(bins[static_cast<size_t>(s)]) /
                        static_cast<double>(total));
    }

    std::optional<double> m_overflow() const {
        if (total == 0 || overflow == 0) return std::nullopt;
        return std::log(static_cast<double>(overflow) / static_cast<double>(total));
    }

    double exp_sum() const {
        if (total == 0) return 0.0;
        double s = 0;
        for (long long c : bins) s += static_cast<double>(c);
        s += static_cast<double>(overflow);
        return s / static_cast<double>(total);
    }
};

inline std::optional<double> motion_smoothness(const SmoothnessHistogram& h, int s) {
    return h.m(s);
}

inline SmoothnessHistogram smoothness_of_field(const FlowField& d, int s_max = 10) {
    SmoothnessHistogram h(s_max);
    h.add(d);
    return h;
}

// ---------------------------------------------------------------------------

struct FrameMetric {
    int index = 0;          // output index (odd = interpolated, even = deblurred)
    std::string kind;       // "deblur" | "interp"
    double psnr = 0;
    double ssim = 0;
};

struct MetricReport {
    std::vector<FrameMetric> frames;
    double psnr_deblur = 0, ssim_deblur = 0;
    double psnr_interp = 0, ssim_interp = 0;
    double psnr_all = 0, ssim_all = 0;
    int deblur_count = 0, interp_count = 0, triple_count = 0;
    SmoothnessHistogram hist{10};
    std::string flow_provenance;
    std::string config_hash;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& fm : frames)
            rows.push_back(
                {{"index", fm.index}, {"kind", fm.kind}, {"psnr", fm.psnr}, {"ssim", fm.ssim}});
        nlohmann::json hj = nlohmann::json::array();
        for (int s = 0; s <= hist.s_max; ++s) {
            auto m = hist.m(s);
            hj.push_back({{"s", s},
                          {"count", hist.bins[static_cast<size_t>(s)]},
                          {"M", m ? nlohmann::json(*m) : nlohmann::json(nullptr)}});
        }
        auto mo = hist.m_overflow();
        hj.push_back({{"s", "overflow"},
                      {"count", hist.overflow},
                      {"M", mo ? nlohmann::json(*mo) : nlohmann::json(nullptr)}});
        return {{"frames", rows},
                {"aggregates",
                 {{"deblurring", {{"psnr", psnr_deblur}, {"ssim", ssim_deblur}, {"count", deblur_count}}},
                  {"interpolation", {{"psnr", psnr_interp}, {"ssim", ssim_interp}, {"count", interp_count}}},
                  {"comprehensive", {{"psnr", psnr_all}, {"ssim", ssim_all}, {"count", deblur_count + interp_count}}}}},
                {"smoothness", {{"total", hist.total}, {"triples", triple_count}, {"histogram", hj}}},
                {"flow_provenance", flow_provenance},
                {"config_hash", config_hash}};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "row,index,kind,psnr,ssim\n";
        for (const auto& fm : frames)
            os << "frame," << fm.index << ',' << fm.kind << ',' << fm.psnr << ',' << fm.ssim
               << "\n";
        os << "aggregate,deblurring,," << psnr_deblur << ',' << ssim_deblur << "\n";
        os << "aggregate,interpolation,," << psnr_interp << ',' << ssim_interp << "\n";
        os << "aggregate,comprehensive,," << psnr_all << ',' << ssim_all << "\n";
        os << "s,count,M\n";
        for (int s = 0; s <= hist.s_max; ++s) {
            auto m = hist.m(s);
            os << s << ',' << hist.bins[static_cast<size_t>(s)] << ','
               << (m ? std::to_string(*m) : "null") << "\n";
        }
        auto mo = hist.m_overflow();
        os << "overflow," << hist.overflow << ',' << (mo ? std::to_string(*mo) : "null") << "\n";
        return os.str();
    }
};

// PSNR/SSIM per frame split into deblurring (even output index), interpolation
// (odd) and comprehensive groups; differential-flow vectors are pooled over
// all sliding triples before binning. index_offset is the output index of
// pred.frames[0] (1 for a standard 2N-1 output sequence).
inline MetricReport evaluate(const FrameSequence& pred, const FrameSequence& gt,
                             FlowSource& pred_flow, FlowSource& gt_flow, int s_max = 10,
                             int index_offset = 1) {
    if (pred.count() != gt.count())
        throw invalid_input("evaluate: sequence lengths differ");
    if (pred.count() == 0) throw invalid_input("evaluate: empty sequences");
    for (int i = 0; i < pred.count(); ++i)
        if (!pred.frames[static_cast<size_t>(i)].same_shape(gt.frames[static_cast<size_t>(i)]))
            throw invalid_input("evaluate: frame shape mismatch at " + std::to_string(i));

    MetricReport r;
    r.hist = SmoothnessHistogram(s_max);
    r.flow_provenance = pred_flow.provenance();
    double pd = 0, sd = 0, pi = 0, si = 0;
    for (int j = 0; j < pred.count(); ++j) {
        FrameMetric fm;
        fm.index = index_offset + j;
        fm.kind = fm.index % 2 == 0 ? "deblur" : "interp";
        fm.psnr = psnr(pred.frames[static_cast<size_t>(j)], gt.frames[static_cast<size_t>(j)]);
        fm.ssim = ssim(pred.frames[static_cast<size_t>(j)], gt.frames[static_cast<size_t>(j)]);
        if (fm.index % 2 == 0) {
            pd += fm.psnr;
            sd += fm.ssim;
            ++r.deblur_count;
        } else {
            pi += fm.psnr;
            si += fm.ssim;
            ++r.interp_count;
        }
        r.frames.push_back(fm);
    }
    if (r.deblur_count) {
        r.psnr_deblur = pd / r.deblur_count;
        r.ssim_deblur = sd / r.deblur_count;
    }
    if (r.interp_count) {
        r.psnr_interp = pi / r.interp_count;
        r.ssim_interp = si / r.interp_count;
    }
    r.psnr_all = (pd + pi) / pred.count();
    r.ssim_all = (sd + si) / pred.count();

    for (int j = 0; j + 2 < pred.count(); ++j) {
        FlowField d = differential_flow(
            pred.frames[static_cast<size_t>(j)], pred.frames[static_cast<size_t>(j + 1)],
            pred.frames[static_cast<size_t>(j + 2)], gt.frames[static_cast<size_t>(j)],
            gt.frames[static_cast<size_t>(j + 1)], gt.frames[static_cast<size_t>(j + 2)],
            pred_flow, gt_flow, j);
        r.hist.add(d);
        ++r.triple_count;
    }
    return r;
}

}  // namespace bvi
