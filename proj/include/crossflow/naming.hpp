#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Globally unique function identifiers and the datastore keys derived from
// them. Rendered IDs are persisted as datastore keys, so the grammar below is
// stable:
//
//   id       := <workflowId> "/" <name> "_" <step> [ "-bindex-" <stack> ]
//   stack    := <level> ( "+" <level> )*
//   name     := [A-Za-z0-9] ( [A-Za-z0-9] | "." )*
//
// A branch stack gains one level per fan-out (push_branch) and loses its most
// recent level at a fan-in (pop_and_merge). Keys append a fixed suffix to a
// rendered id: "-output", "-ivk", "-bitmap".
namespace crossflow::naming {

// Ordered fan-out indices. The element pushed most recently is at the back
// and is rendered last.
using BranchStack = std::vector<int>;

struct FunctionId {
    std::string workflow_id;
    std::string name;
    int step = 0;
    BranchStack branch;

    bool operator==(const FunctionId&) const = default;
};

struct KeySet {
    std::string output_key;
    std::string ivk_key;
    std::string bitmap_key;
};

class EmptyStackError : public std::runtime_error {
  public:
    EmptyStackError() : std::runtime_error("pop_and_merge: participant with empty branch stack") {}
};

// Names are restricted so that rendered ids stay injective: the separators
// '_', '-', '+', '/' may not appear in a function name.
bool valid_function_name(const std::string& name);

// Returns a copy of `stack` with `index` pushed as the new most-recent level.
BranchStack push_branch(const BranchStack& stack, int index);

// Drops the most recent level from every participant stack, then selects the
// merge survivor: the deepest remaining stack, ties broken by the smallest
// level sequence. Permutation-invariant. Throws EmptyStackError if any
// participant stack is empty.
BranchStack pop_and_merge(std::vector<BranchStack> stacks);

FunctionId compute_function_id(const std::string& workflow_id, const std::string& name, int step,
                               const BranchStack& stack);

std::string render_branch(const BranchStack& stack);
std::string render(const FunctionId& id);

KeySet derive_keys(const FunctionId& id);

// Coordination key for cross-workflow collaboration (ByBatch/ByRedundant).
// It spans workflows, so it is namespaced instead of workflow-prefixed.
std::string collaboration_key(const std::vector<std::string>& function_names);

}  // namespace crossflow::naming
