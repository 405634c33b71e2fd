import numpy as np
import pytest

from rismimo import LinkSpecF, LinkSpecG
from rismimo.channel import make_channel_spec
from rismimo.rng import complex_gaussian, haar_unitary, stream


def random_profile(gen, shape):
    return np.sqrt(gen.uniform(0.0, 2.0, size=shape))


def build_random_spec(seed=5, T=8, R=8, Lks=(12, 10), rho=0.8, kappa=0.0):
    """Generic Weichselberger channel with K = len(Lks) panels."""
    gen = stream(seed)

    def specular(shape, profile, norm):
        if kappa == 0:
            return np.zeros(shape, dtype=np.complex128)
        s = complex_gaussian(gen, shape, 1.0)
        target = kappa * (profile ** 2).sum() / norm
        return s * np.sqrt(target / np.linalg.norm(s) ** 2)

    M0 = random_profile(gen, (R, T))
    links_F = [LinkSpecF(0, specular((R, T), M0, T), haar_unitary(gen, R),
                         haar_unitary(gen, T), M0)]
    links_G = []
    for k, Lk in enumerate(Lks, start=1):
        Mk = random_profile(gen, (Lk, T))
        links_F.append(LinkSpecF(k, specular((Lk, T), Mk, T), haar_unitary(gen, Lk),
                                 haar_unitary(gen, T), Mk))
        Nk = random_profile(gen, (R, Lk))
        links_G.append(LinkSpecG(k, specular((R, Lk), Nk, Lk), haar_unitary(gen, R),
                                 haar_unitary(gen, Lk), Nk, rho=rho, r=Lk / T))
    return make_channel_spec(links_F, links_G, T=T, R=R)


@pytest.fixture(scope="session")
def random_spec():
    return build_random_spec()


@pytest.fixture(scope="session")
def rician_spec():
    return build_random_spec(seed=9, kappa=2.0)
