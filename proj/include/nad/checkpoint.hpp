#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nad/evaluator.hpp"
#include "nad/field.hpp"
#include "nad/reduction.hpp"
#include "nad/training.hpp"

namespace nad {

// ---------------------------------------------------------------------------
// NADF checkpoint file format
//
//   NADF1\n
//   <d> <k> <m> <method> <pe_bands> <pe_norm> <hidden> <layers> <param_count>\n
//   little-endian float32 theta
//
// m counts signal channels; the field's output width is m*k^d for the
// reduced-bank method and m otherwise. pe_norm stores the encoding
// normalization order q (0 means unnormalized bands).

struct Checkpoint {
    Method method = Method::autodiff;
    int k = 1;
    int m = 1;
    NeuralField field;

    int expected_out() const {
        return method == Method::autodiff_reduced ? m * reduction_block_count(field.cfg.d, k)
                                                  : m;
    }
    void validate() const {
        field.cfg.validate();
        if (k < 1 || k > 4) throw std::invalid_argument("Checkpoint: k must be 1..4");
        if (m < 1) throw std::invalid_argument("Checkpoint: m must be >= 1");
        if (field.cfg.out != expected_out())
            throw std::invalid_argument("Checkpoint: field output width inconsistent with method");
        if (field.theta.size() != param_count(field.cfg))
            throw std::invalid_argument("Checkpoint: theta size mismatch");
    }
};

inline Checkpoint to_checkpoint(const TrainResult& r) {
    Checkpoint ck;
    ck.method = r.method;
    ck.k = r.k;
    ck.m = r.channels;
    ck.field = r.field;
    return ck;
}

inline AntiderivativeEvaluator make_checkpoint_evaluator(const Checkpoint& ck) {
    ck.validate();
    if (ck.method == Method::autodiff_reduced)
        return make_bank_evaluator(ReducedFieldBank(ck.field, ck.k, ck.m));
    return make_field_evaluator(ck.field, ck.k);
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    ck.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const FieldConfig& c = ck.field.cfg;
    f << "NADF1\n"
      << c.d << ' ' << ck.k << ' ' << ck.m << ' ' << method_name(ck.method) << ' ' << c.pe_bands
      << ' ' << (c.pe_normalized ? c.pe_norm_order : 0) << ' ' << c.hidden_width << ' '
      << c.hidden_layers << ' ' << param_count(c) << '\n';
    static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
    std::vector<float> payload(static_cast<size_t>(ck.field.theta.size()));
    for (Eigen::Index i = 0; i < ck.field.theta.size(); ++i)
        payload[static_cast<size_t>(i)] = static_cast<float>(ck.field.theta[i]);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw std::runtime_error("save_checkpoint: short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic;
    if (!std::getline(f, magic) || magic.size() != 5 || magic.compare(0, 4, "NADF") != 0)
        throw std::runtime_error("load_checkpoint: not a checkpoint file");
    if (magic[4] != '1')
        throw std::runtime_error("load_checkpoint: unsupported version '" + magic.substr(4) + "'");
    std::string header;
    if (!std::getline(f, header)) throw std::runtime_error("load_checkpoint: missing header");

    Checkpoint ck;
    long stored_params = 0;
    {
        std::istringstream hs(header);
        int d = 0, pe_bands = -1, pe_norm = -1, hidden = 0, layers = 0;
        std::string method;
        if (!(hs >> d >> ck.k >> ck.m >> method >> pe_bands >> pe_norm >> hidden >> layers >>
              stored_params))
            throw std::runtime_error("load_checkpoint: corrupt header");
        std::string extra;
        if (hs >> extra) throw std::runtime_error("load_checkpoint: corrupt header");
        try {
            ck.method = method_from_name(method);
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("load_checkpoint: corrupt header (method '" + method + "')");
        }
        FieldConfig& c = ck.field.cfg;
        c.d = d;
        c.pe_bands = pe_bands;
        c.pe_norm_order = pe_norm;
        c.pe_normalized = pe_norm > 0;
        c.hidden_width = hidden;
        c.hidden_layers = layers;
        if (ck.k < 1 || ck.k > 4 || ck.m < 1)
            throw std::runtime_error("load_checkpoint: corrupt header");
        c.out = ck.expected_out();
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(std::string("load_checkpoint: corrupt header (") + e.what() +
                                     ")");
        }
        if (stored_params != param_count(c))
            throw std::runtime_error("load_checkpoint: parameter count mismatch");
    }

    std::vector<float> payload(static_cast<size_t>(stored_params));
    f.read(reinterpret_cast<char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != payload.size() * sizeof(float))
        throw std::runtime_error("load_checkpoint: truncated payload");
    char extra;
    if (f.read(&extra, 1).gcount() != 0)
        throw std::runtime_error("load_checkpoint: trailing bytes after payload");

    ck.field.theta = Eigen::VectorXd(stored_params);
    for (long i = 0; i < stored_params; ++i)
        ck.field.theta[i] = static_cast<double>(payload[static_cast<size_t>(i)]);
    return ck;
}

} // namespace nad
