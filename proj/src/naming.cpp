#include "crossflow/naming.hpp"

#include <algorithm>
#include <cctype>

namespace crossflow::naming {

bool valid_function_name(const std::string& name) {
    if (name.empty()) return false;
    if (!std::isalnum(static_cast<unsigned char>(name.front()))) return false;
    return std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '.';
    });
}

BranchStack push_branch(const BranchStack& stack, int index) {
    if (index < 0) throw std::invalid_argument("push_branch: negative branch index");
    BranchStack out = stack;
    out.push_back(index);
    return out;
}

BranchStack pop_and_merge(std::vector<BranchStack> stacks) {
    if (stacks.empty()) throw std::invalid_argument("pop_and_merge: no participant stacks");
    for (auto& s : stacks) {
        if (s.empty()) throw EmptyStackError();
        s.pop_back();
    }
    // Survivor: deepest popped stack, ties broken by the smallest level
    // sequence. Comparing (size desc, levels asc) keeps the choice
    // independent of input order.
    const BranchStack* best = &stacks.front();
    for (const auto& s : stacks) {
        if (s.size() > best->size() || (s.size() == best->size() && s < *best)) best = &s;
    }
    return *best;
}

FunctionId compute_function_id(const std::string& workflow_id, const std::string& name, int step,
                               const BranchStack& stack) {
    if (step < 0) throw std::invalid_argument("compute_function_id: negative step");
    return FunctionId{workflow_id, name, step, stack};
}

std::string render_branch(const BranchStack& stack) {
    std::string out;
    for (size_t i = 0; i < stack.size(); ++i) {
        if (i > 0) out += '+';
        out += std::to_string(stack[i]);
    }
    return out;
}

std::string render(const FunctionId& id) {
    std::string out = id.workflow_id + "/" + id.name + "_" + std::to_string(id.step);
    if (!id.branch.empty()) out += "-bindex-" + render_branch(id.branch);
    return out;
}

KeySet derive_keys(const FunctionId& id) {
    const std::string base = render(id);
    return KeySet{base + "-output", base + "-ivk", base + "-bitmap"};
}

std::string collaboration_key(const std::vector<std::string>& function_names) {
    std::string out = "collab/";
    for (size_t i = 0; i < function_names.size(); ++i) {
        if (i > 0) out += '+';
        out += function_names[i];
    }
    return out;
}

}  // namespace crossflow::naming
