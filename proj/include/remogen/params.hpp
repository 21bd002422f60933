#pragma once

#include <string>

#include "remogen/attention.hpp"
#include "remogen/tensor.hpp"

// Named-tensor enumeration used to move parameter structs in and out of the
// weight archive. A visitor is any callable f(const std::string&, Tensor2&).
namespace remogen::params {

template <class F>
void visit(F& f, const std::string& name, Tensor2& t) {
  f(name, t);
}

template <class F>
void visit(F& f, const std::string& name, Linear& l) {
  f(name + ".weight", l.weight);
  f(name + ".bias", l.bias);
}

template <class F>
void visit(F& f, const std::string& name, LayerNormParams& ln) {
  f(name + ".gain", ln.gain);
  f(name + ".offset", ln.offset);
}

template <class F>
void visit(F& f, const std::string& name, AttentionParams& a) {
  f(name + ".wq", a.wq);
  f(name + ".wk", a.wk);
  f(name + ".wv", a.wv);
  f(name + ".wo", a.wo);
}

template <class F>
void visit(F& f, const std::string& name, RelBiasParams& b) {
  f(name + ".wb", b.wb);
}

inline Linear init_linear(std::size_t in, std::size_t out, Rng& rng, bool zero = false) {
  return {seeded_init(in, out, zero ? InitScheme::kZeros : InitScheme::kUniformFan, rng), Tensor2(1, out)};
}

}  // namespace remogen::params
