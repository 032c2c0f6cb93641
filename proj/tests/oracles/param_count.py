"""Independent parameter count for the default encoder configuration.

Walks the layer shapes from the architecture description without
touching the C++ code. Prints the total and a per-group breakdown.
"""

def conv_params(c_in, kernels, channels):
    total = 0
    for k, c_out in zip(kernels, channels):
        total += k * c_in * c_out + c_out
        c_in = c_out
    return total, c_in


def linear(i, o):
    return i * o + o


def layer_norm(d):
    return 2 * d


def encoder_params(n_in=4, kernels=(5, 3, 3, 3, 3), channels=(64, 128, 128, 128, 64),
                   d=512, layers=2, ffn=2048, labels=13):
    conv, width = conv_params(n_in, kernels, channels)
    proj = linear(width, d)
    block = layer_norm(d) + 4 * linear(d, d) + layer_norm(d) + linear(d, ffn) + linear(ffn, d)
    final = layer_norm(d)
    head = linear(d, labels)
    groups = {"conv": conv, "proj": proj, "blocks": layers * block, "final_ln": final, "head": head}
    return sum(groups.values()), groups


if __name__ == "__main__":
    total, groups = encoder_params()
    for name, n in groups.items():
        print(f"{name:10s} {n}")
    print(f"total      {total}")
