#pragma once

#include <string>
#include <utility>
#include <vector>

#include "m2gan/autodiff.hpp"
#include "m2gan/random.hpp"

namespace m2gan {

struct NamedParam {
    std::string name;
    Var var;
};

// A named tensor that is saved/restored with checkpoints but carries no
// gradient (spectral-norm u vectors and similar running state).
struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

// Minimal parameter-registration base. Layers register their parameters and
// submodules in their constructors; checkpointing and optimizers address
// parameters by dotted path ("stage.urdb1.enc1.layer0.weight").
class Module {
public:
    virtual ~Module() = default;
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    std::vector<NamedParam> named_parameters() const;
    std::vector<Var> parameters() const;
    std::vector<NamedBuffer> named_buffers();
    std::int64_t parameter_count() const;
    void zero_grad();

protected:
    Var register_param(const std::string& name, Tensor init);
    void register_buffer(const std::string& name, Tensor* tensor);
    void register_module(const std::string& name, Module& child);

private:
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const;
    void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);

    std::vector<NamedParam> params_;
    std::vector<NamedBuffer> buffers_;
    std::vector<std::pair<std::string, Module*>> children_;
};

// Kaiming-style normal initialization for conv kernels {OC,KH,KW,IC}
// and linear weights {OUT,IN}; fan-in computed from the trailing dims.
Tensor init_conv_weight(std::vector<int> shape, Rng& rng);

}  // namespace m2gan
